#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "persp/corpus.hpp"
#include "persp/errors.hpp"
#include "persp/random.hpp"
#include "synthetic.hpp"

using namespace persp;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::kOk;
}

Corpus parse(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus(in, "inline");
}

DataPoint point(std::string c, std::string q, std::string a, std::string b, std::string cc) {
    return DataPoint{std::move(c), std::move(q), std::move(a), std::move(b), std::move(cc), std::nullopt};
}

}  // namespace

TEST(Corpus, LoadsValidLinesInOrder) {
    Corpus c = parse(
        R"({"context":"C1","question":"Q1","answerA":"a","answerB":"b","answerC":"c","label":"2"})"
        "\n\n"
        R"({"context":"C2","question":"Q2","answerA":"a","answerB":"b","answerC":"c"})"
        "\n");
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.points[0].context, "C1");
    EXPECT_EQ(c.points[0].gold_label, OptionLabel::kB);
    EXPECT_FALSE(c.points[1].gold_label.has_value());
}

TEST(Corpus, MissingQuestionNamesLine) {
    try {
        parse(R"({"context":"C","question":"Q","answerA":"a","answerB":"b","answerC":"c"})"
              "\n"
              R"({"context":"C","answerA":"a","answerB":"b","answerC":"c"})");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kMissingField);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("question"), std::string::npos) << e.what();
    }
}

TEST(Corpus, BlankFieldIsMissing) {
    EXPECT_EQ(code_of([] {
                  parse(R"({"context":"  ","question":"Q","answerA":"a","answerB":"b","answerC":"c"})");
              }),
              ErrorCode::kMissingField);
}

TEST(Corpus, MalformedAndEmpty) {
    EXPECT_EQ(code_of([] { parse("{not json\n"); }), ErrorCode::kMalformedLine);
    EXPECT_EQ(code_of([] {
                  parse(R"({"context":"C","question":"Q","answerA":"a","answerB":"b","answerC":"c","label":"D"})");
              }),
              ErrorCode::kMalformedLine);
    EXPECT_EQ(code_of([] { parse("\n\n"); }), ErrorCode::kEmptyCorpus);
    EXPECT_EQ(code_of([] { load_corpus("/nonexistent/corpus.jsonl"); }), ErrorCode::kIo);
}

TEST(Corpus, MarkerCollisionRejectedAtLoad) {
    EXPECT_EQ(code_of([] {
                  parse(R"({"context":"C","question":"Q","answerA":"x <ansa>: y","answerB":"b","answerC":"c"})");
              }),
              ErrorCode::kMarkerCollision);
    EXPECT_EQ(code_of([] { render_control_token_text(point("C", "Q", "a <ansa>: z", "b", "c")); }),
              ErrorCode::kMarkerCollision);
}

TEST(Corpus, WriteThenParseRoundTrips) {
    Corpus c = synth::synthetic_social_corpus(30, 4);
    std::stringstream ss;
    write_corpus(c, ss);
    Corpus back = parse_corpus(ss, "rt");
    EXPECT_EQ(back.points, c.points);
}

TEST(Split, DefaultRatiosOnThousand) {
    Corpus c = synth::synthetic_social_corpus(1000, 1);
    CorpusSplit s = split_corpus(c, SplitSpec{0.75, 0.15, 0.10, 7});
    EXPECT_EQ(s.train.size(), 750u);
    EXPECT_EQ(s.eval.size(), 150u);
    EXPECT_EQ(s.test.size(), 100u);
}

TEST(Split, InvalidFractions) {
    Corpus c = synth::synthetic_social_corpus(10, 1);
    EXPECT_EQ(code_of([&] { split_corpus(c, SplitSpec{0.8, 0.3, 0.1, 0}); }), ErrorCode::kInvalidSplit);
    EXPECT_EQ(code_of([&] { split_corpus(c, SplitSpec{1.0, 0.0, 0.0, 0}); }), ErrorCode::kInvalidSplit);
    EXPECT_EQ(code_of([&] { split_corpus(c, SplitSpec{0.5, -0.1, 0.6, 0}); }), ErrorCode::kInvalidSplit);
}

TEST(Split, RemainderGoesToTrain) {
    Corpus c = synth::synthetic_social_corpus(7, 1);
    CorpusSplit s = split_corpus(c, SplitSpec{0.75, 0.15, 0.10, 3});
    EXPECT_EQ(s.eval.size(), 1u);
    EXPECT_EQ(s.test.size(), 0u);
    EXPECT_EQ(s.train.size(), 6u);
}

TEST(SplitProperty, DeterministicDisjointAndCovering) {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng.index(300);
        Corpus c = synth::synthetic_social_corpus(n, trial);
        // Make every record distinct so membership is checkable by value.
        for (std::size_t i = 0; i < n; ++i) c.points[i].context += " #" + std::to_string(i);
        const double test_f = 0.05 + 0.2 * rng.uniform();
        const double eval_f = 0.05 + 0.2 * rng.uniform();
        SplitSpec spec{1.0 - test_f - eval_f, eval_f, test_f, rng.next()};
        CorpusSplit a = split_corpus(c, spec);
        CorpusSplit b = split_corpus(c, spec);
        EXPECT_EQ(a.train.points, b.train.points);
        EXPECT_EQ(a.eval.points, b.eval.points);
        EXPECT_EQ(a.test.points, b.test.points);
        ASSERT_EQ(a.train.size() + a.eval.size() + a.test.size(), n);
        std::set<std::string> seen;
        for (const Corpus* part : {&a.train, &a.eval, &a.test}) {
            for (const DataPoint& p : part->points) EXPECT_TRUE(seen.insert(p.context).second);
        }
        EXPECT_EQ(seen.size(), n);
    }
}

TEST(ControlText, RendersFixedLayout) {
    EXPECT_EQ(render_control_token_text(point("C", "Q", "x", "y", "z")),
              "<|startoftext|> <context>: C <question>: Q <ansa>: x <ansb>: y <ansc>: z <|endoftext|>");
}

TEST(ControlText, ParseErrors) {
    try {
        parse_control_token_text("<|startoftext|> <context>: C <question>: Q <ansa>: x <ansb>: y <|endoftext|>");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kParseFailed);
        EXPECT_NE(std::string(e.what()).find("<ansc>:"), std::string::npos) << e.what();
    }
    EXPECT_EQ(code_of([] {
                  parse_control_token_text(
                      "<|startoftext|> <context>: C <question>: <ansa>: x <ansb>: y <ansc>: z <|endoftext|>");
              }),
              ErrorCode::kParseFailed);
}

TEST(ControlTextProperty, RoundTripsMarkerFreePoints) {
    Corpus c = synth::synthetic_social_corpus(200, 12);
    for (DataPoint p : c.points) {
        p.gold_label.reset();
        EXPECT_EQ(parse_control_token_text(render_control_token_text(p)), p);
    }
    // Irregular whitespace inside fields is normalised only at the edges.
    DataPoint odd = point("a  b", "c\td?", "x", "y  y", "z");
    EXPECT_EQ(parse_control_token_text(render_control_token_text(odd)), odd);
}
