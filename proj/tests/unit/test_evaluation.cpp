#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "persp/bertscore.hpp"
#include "persp/discriminability.hpp"
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

CandidateTriple as_candidate(const DataPoint& p) {
    return CandidateTriple{p.context, p.question, p.option_a, p.option_b, p.option_c,
                           Pipeline::kStagedInfilling, 0};
}

}  // namespace

TEST(BertScore, HandExample) {
    LookupEncoder enc("toy", {{"tok1", {1.0, 0.0}}, {"tok2", {0.0, 1.0}}});
    std::vector<std::string> cand = {"tok1"}, ref = {"tok1 tok2"};
    BertScoreResult r = bert_score(cand, ref, enc);
    EXPECT_NEAR(r.pairs[0].precision, 1.0, 1e-9);
    EXPECT_NEAR(r.pairs[0].recall, 0.5, 1e-9);
    EXPECT_NEAR(r.pairs[0].f1, 2.0 / 3.0, 1e-9);
}

TEST(BertScore, IdenticalTextsScoreExactlyOne) {
    HashingEncoder enc;
    auto texts = synth::synthetic_sentences(25, 6, false);
    BertScoreResult r = bert_score(texts, texts, enc);
    for (const PairScore& s : r.pairs) {
        EXPECT_EQ(s.precision, 1.0);
        EXPECT_EQ(s.recall, 1.0);
        EXPECT_EQ(s.f1, 1.0);
    }
    EXPECT_EQ(r.mean_f1, 1.0);
}

TEST(BertScore, ReferenceImplementationAgreement) {
    std::ifstream in(PERSP_TEST_DATA_DIR "/bertscore_oracle.json");
    ASSERT_TRUE(in) << "missing oracle file";
    const auto data = nlohmann::json::parse(in);
    std::unordered_map<std::string, std::vector<double>> table =
        data.at("table").get<std::unordered_map<std::string, std::vector<double>>>();
    LookupEncoder enc("oracle", table);
    std::vector<std::string> cand, ref;
    for (const auto& p : data.at("pairs")) {
        cand.push_back(p.at("candidate"));
        ref.push_back(p.at("reference"));
    }
    ASSERT_EQ(cand.size(), 20u);
    BertScoreResult r = bert_score(cand, ref, enc);
    for (std::size_t i = 0; i < cand.size(); ++i) {
        const auto& p = data.at("pairs")[i];
        EXPECT_NEAR(r.pairs[i].precision, p.at("precision").get<double>(), 1e-4) << i;
        EXPECT_NEAR(r.pairs[i].recall, p.at("recall").get<double>(), 1e-4) << i;
        EXPECT_NEAR(r.pairs[i].f1, p.at("f1").get<double>(), 1e-4) << i;
    }
}

TEST(BertScoreProperty, SymmetryAndRange) {
    HashingEncoder enc;
    auto a = synth::synthetic_sentences(60, 1, false);
    auto b = synth::synthetic_sentences(60, 2, false);
    BertScoreResult ab = bert_score(a, b, enc);
    BertScoreResult ba = bert_score(b, a, enc);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(ab.pairs[i].precision, ba.pairs[i].recall);
        EXPECT_EQ(ab.pairs[i].recall, ba.pairs[i].precision);
        EXPECT_EQ(ab.pairs[i].f1, ba.pairs[i].f1);
        for (double v : {ab.pairs[i].precision, ab.pairs[i].recall, ab.pairs[i].f1}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(BertScore, Errors) {
    HashingEncoder enc;
    std::vector<std::string> one = {"a b"}, two = {"a", "b"};
    EXPECT_EQ(code_of([&] { bert_score(one, two, enc); }), ErrorCode::kLengthMismatch);
    try {
        std::vector<std::string> cand = {"fine", ""};
        std::vector<std::string> ref = {"fine", "also fine"};
        bert_score(cand, ref, enc);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kEmptyText);
        EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos);
    }
    LookupEncoder lookup("toy", {{"x", {1.0}}});
    std::vector<std::string> unknown = {"y"};
    EXPECT_EQ(code_of([&] { bert_score(unknown, unknown, lookup); }), ErrorCode::kEncoderFailure);
    EXPECT_EQ(code_of([] { make_encoder("no-such-encoder"); }), ErrorCode::kEncoderFailure);
}

TEST(BertScore, SubprocessEncoderFailureIsReported) {
    SubprocessEncoder enc("roberta-base", "false");
    std::vector<std::string> t = {"hello"};
    EXPECT_EQ(code_of([&] { bert_score(t, t, enc); }), ErrorCode::kEncoderFailure);
}

TEST(BertScore, SubprocessEncoderProtocol) {
    // A shell stand-in that answers with one fixed two-token embedding.
    SubprocessEncoder enc("stub", "cat >/dev/null; echo '{\"embeddings\": [[[1,0],[0,1]]]}'");
    std::vector<std::string> t = {"two words"};
    BertScoreResult r = bert_score(t, t, enc);
    EXPECT_EQ(r.pairs[0].f1, 1.0);
}

TEST(BertScore, PretrainedIdsAreWired) {
    ASSERT_EQ(pretrained_encoder_ids().size(), 3u);
    for (std::string_view id : pretrained_encoder_ids()) {
        auto enc = make_encoder(id);
        EXPECT_EQ(enc->id(), id);
    }
    EXPECT_EQ(make_encoder("toy-hash")->id(), "toy-hash");
}

TEST(SliceEval, TextsAndSelfMatch) {
    EXPECT_EQ(slice_text("Q", "A", "B", "C", Slice::kQABC), "Q A B C");
    EXPECT_EQ(slice_text("Q", "A", "B", "C", Slice::kABC), "A B C");
    EXPECT_EQ(slice_text("Q", "A", "B", "C", Slice::kQ), "Q");

    Corpus test = synth::synthetic_social_corpus(15, 5);
    std::vector<CandidateTriple> gen;
    for (const DataPoint& p : test.points) gen.push_back(as_candidate(p));
    HashingEncoder hash;
    std::vector<const TokenEncoder*> encoders = {&hash};
    auto reports = slice_eval(test, gen, encoders);
    ASSERT_EQ(reports.size(), 3u);
    EXPECT_EQ(reports[0].slice, Slice::kQABC);
    EXPECT_EQ(reports[1].slice, Slice::kABC);
    EXPECT_EQ(reports[2].slice, Slice::kQ);
    for (const ScoreReport& r : reports) {
        EXPECT_EQ(r.f1, 1.0);
        EXPECT_EQ(r.n_pairs, 15u);
        EXPECT_EQ(r.encoder_id, "toy-hash");
    }
}

TEST(SliceEval, HarmonicF1AndErrors) {
    Corpus test = synth::synthetic_social_corpus(12, 5);
    Corpus other = synth::synthetic_social_corpus(12, 6);
    std::vector<CandidateTriple> gen;
    for (std::size_t i = 0; i < test.size(); ++i) {
        CandidateTriple c = as_candidate(other.points[i]);
        c.context = test.points[i].context;
        gen.push_back(c);
    }
    HashingEncoder hash;
    std::vector<const TokenEncoder*> encoders = {&hash, &hash};
    auto reports = slice_eval(test, gen, encoders);
    ASSERT_EQ(reports.size(), 6u);
    for (const ScoreReport& r : reports) {
        EXPECT_NEAR(r.f1, 2 * r.precision * r.recall / (r.precision + r.recall), 1e-6);
        EXPECT_LT(r.f1, 1.0);
    }
    gen.pop_back();
    EXPECT_EQ(code_of([&] { slice_eval(test, gen, encoders); }), ErrorCode::kLengthMismatch);
}

TEST(Tfidf, SklearnSemantics) {
    // Reference values from sklearn's TfidfVectorizer defaults.
    std::vector<std::string> docs = {"the cat sat", "the dog sat down", "a cat"};
    TfidfMatrix m = tfidf_vectorize(docs);
    EXPECT_EQ(m.terms, (std::vector<std::string>{"cat", "dog", "down", "sat", "the"}));
    EXPECT_NEAR(m.idf[0], std::log(4.0 / 3.0) + 1.0, 1e-12);
    EXPECT_NEAR(m.idf[1], std::log(2.0) + 1.0, 1e-12);
    const std::vector<double> row1 = {0.5628290964997665, 0.5628290964997665, 0.42804603506311856,
                                      0.42804603506311856};
    ASSERT_EQ(m.rows[1].size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(m.rows[1][k].first, k + 1);
        EXPECT_NEAR(m.rows[1][k].second, row1[k], 1e-12);
    }
    // "a cat": the single-letter word is dropped, leaving a unit vector.
    ASSERT_EQ(m.rows[2].size(), 1u);
    EXPECT_NEAR(m.rows[2][0].second, 1.0, 1e-12);
    for (const auto& row : m.rows) {
        double n = 0;
        for (auto [c, w] : row) n += w * w;
        EXPECT_NEAR(n, 1.0, 1e-12);
    }
    std::vector<std::string> nothing = {"a", "b ."};
    EXPECT_EQ(code_of([&] { tfidf_vectorize(nothing); }), ErrorCode::kDegenerateVocabulary);
}

TEST(Svc, SeparatesClusters) {
    Rng rng(4);
    std::vector<std::array<double, 2>> x;
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
        const int label = i % 2;
        x.push_back({rng.normal() * 0.5 + (label ? 2.0 : -2.0), rng.normal() * 0.5});
        y.push_back(label);
    }
    RbfSvc svc;
    svc.fit(x, y);
    int correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i) correct += svc.predict(x[i]) == y[i];
    EXPECT_EQ(correct, 100);
    EXPECT_EQ(svc.predict({3.0, 0.0}), 1);
    EXPECT_EQ(svc.predict({-3.0, 0.0}), 0);
}

TEST(Svc, MatchesLibsvmOnXorLikeData) {
    // Frozen from sklearn.svm.SVC(kernel="rbf", C=1, gamma="scale").decision_function.
    std::vector<std::array<double, 2>> x = {{0, 0}, {1, 1}, {0, 1}, {1, 0}, {0.2, 0.1}, {0.9, 0.8}};
    std::vector<int> y = {0, 0, 1, 1, 0, 1};
    RbfSvc svc;
    svc.fit(x, y);
    EXPECT_NEAR(svc.gamma(), 2.4, 1e-12);
    EXPECT_NEAR(svc.decision({0.5, 0.5}), 0.33251983748906616, 1e-3);
    EXPECT_NEAR(svc.decision({0.0, 0.9}), 0.8993831550203175, 1e-3);
}

TEST(Discriminability, ReportInvariantsAndDeterminism) {
    auto all = synth::synthetic_sentences(200, 3, false);
    std::vector<std::string> a(all.begin(), all.begin() + 100), b(all.begin() + 100, all.end());
    DiscriminabilityReport r = discriminability(a, b, 5);
    EXPECT_EQ(r.eval_size(), 40u);
    EXPECT_EQ(r.embedding.size(), 200u);
    const double trace = static_cast<double>(r.confusion[0][0] + r.confusion[1][1]);
    EXPECT_DOUBLE_EQ(r.accuracy, trace / 40.0);
    std::size_t evals = 0;
    for (const auto& p : r.embedding) evals += p.in_eval_split;
    EXPECT_EQ(evals, 40u);
    DiscriminabilityReport again = discriminability(a, b, 5);
    EXPECT_EQ(again.accuracy, r.accuracy);
    EXPECT_EQ(again.embedding[17].x, r.embedding[17].x);
}

TEST(Discriminability, Errors) {
    std::vector<std::string> same = {"hello world", "hello world"};
    EXPECT_EQ(code_of([&] { discriminability(same, same, 1); }), ErrorCode::kDegenerateVocabulary);
    std::vector<std::string> one = {"hello world"};
    EXPECT_EQ(code_of([&] { discriminability(one, same, 1); }), ErrorCode::kPrecondition);
}
