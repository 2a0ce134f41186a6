#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

#include "persp/config.hpp"
#include "persp/errors.hpp"
#include "persp/generation.hpp"
#include "persp/random.hpp"
#include "persp/tiny_lm.hpp"
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

DataPoint point(std::string c, std::string q, std::string a, std::string b, std::string cc) {
    return DataPoint{std::move(c), std::move(q), std::move(a), std::move(b), std::move(cc), std::nullopt};
}

// Uniform over a fixed support of token ids, zero probability elsewhere.
class UniformModel final : public LanguageModel {
public:
    UniformModel(std::size_t vocab, std::vector<TokenId> support)
        : vocab_(vocab), support_(std::move(support)) {}
    std::string backend_id() const override { return "uniform"; }
    std::size_t vocab_size() const override { return vocab_; }
    std::vector<double> next_log_probs(std::span<const TokenId>, std::span<const TokenId>) const override {
        std::vector<double> lp(vocab_, -std::numeric_limits<double>::infinity());
        for (TokenId t : support_) lp[static_cast<std::size_t>(t)] = -std::log(static_cast<double>(support_.size()));
        return lp;
    }
    double train_step(std::span<const TrainExample>, double, const AdamConfig&) override { return 0.0; }
    void save(const std::filesystem::path&) const override {}

private:
    std::size_t vocab_;
    std::vector<TokenId> support_;
};

// Puts all mass on the next gold token of whichever registered sequence has
// the given (source, history) prefix.
class PerfectModel final : public LanguageModel {
public:
    PerfectModel(std::size_t vocab) : vocab_(vocab) {}
    void learn(const TrainSequence& seq) {
        std::vector<TokenId> history = seq.history;
        for (TokenId t : seq.target) {
            next_[{seq.source, history}] = t;
            history.push_back(t);
        }
    }
    std::string backend_id() const override { return "perfect"; }
    std::size_t vocab_size() const override { return vocab_; }
    std::vector<double> next_log_probs(std::span<const TokenId> source,
                                       std::span<const TokenId> history) const override {
        std::vector<double> lp(vocab_, -std::numeric_limits<double>::infinity());
        auto it = next_.find({std::vector<TokenId>(source.begin(), source.end()),
                              std::vector<TokenId>(history.begin(), history.end())});
        if (it != next_.end()) lp[static_cast<std::size_t>(it->second)] = 0.0;
        return lp;
    }
    double train_step(std::span<const TrainExample>, double, const AdamConfig&) override { return 0.0; }
    void save(const std::filesystem::path&) const override {}

private:
    std::size_t vocab_;
    std::map<std::pair<std::vector<TokenId>, std::vector<TokenId>>, TokenId> next_;
};

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.embedding_dim = 8;
    cfg.hidden_dim = 16;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST(StageExamples, StructureMatchesInfillingStages) {
    const auto stages = build_stage_examples(point("C", "Q?", "x", "y", "z"));
    ASSERT_EQ(stages.size(), 4u);
    EXPECT_EQ(stages[0].stage, Stage::kQ);
    EXPECT_EQ(stages[0].input_text, "C <mask>");
    EXPECT_EQ(stages[1].input_text, "C Q? <mask>");
    EXPECT_EQ(stages[1].target_text, "C Q? x");
    EXPECT_EQ(stages[2].input_text, "C Q? x <mask>");
    EXPECT_EQ(stages[3].input_text, "C Q? x y <mask>");
    EXPECT_EQ(stages[3].target_text, "C Q? x y z");
}

TEST(StageExamplesProperty, TelescopeAndShareContext) {
    Corpus c = synth::synthetic_social_corpus(100, 3);
    for (const DataPoint& p : c.points) {
        const auto stages = build_stage_examples(p);
        std::string rebuilt = p.context;
        for (std::size_t k = 0; k < 4; ++k) {
            const StageExample& s = stages[k];
            EXPECT_TRUE(s.input_text.starts_with(p.context));
            ASSERT_TRUE(s.input_text.ends_with(" <mask>"));
            const std::string prefix = s.input_text.substr(0, s.input_text.size() - 7);
            EXPECT_EQ(prefix.find("<mask>"), std::string::npos);
            EXPECT_EQ(s.target_text, prefix + " " + s.field);
            EXPECT_EQ(prefix, rebuilt);
            if (k > 0) {
                EXPECT_EQ(prefix, stages[k - 1].target_text);
            }
            rebuilt += " " + s.field;
        }
        EXPECT_EQ(rebuilt, p.context + " " + p.question + " " + p.option_a + " " + p.option_b + " " +
                               p.option_c);
    }
}

TEST(StagedLoss, UniformThreeSymbolOracle) {
    // Fields are one word, so each stage scores two tokens: the word and the
    // end token. The model spreads its mass over {p, q, end}.
    Vocabulary vocab = Vocabulary::from_tokens({"p", "q"});
    UniformModel model(vocab.size(), {vocab.id("p"), vocab.id("q"), Vocabulary::kEnd});
    const auto stages = build_stage_examples(point("p q", "p", "q", "p", "q"));
    for (const auto& s : stages) EXPECT_EQ(s.target_len, 2u);
    LossBreakdown loss = staged_loss(model, vocab, stages);
    const double expected = 2.0 * std::log(3.0);
    EXPECT_NEAR(loss.loss_q, expected, 1e-9);
    EXPECT_NEAR(loss.loss_a, expected, 1e-9);
    EXPECT_NEAR(loss.loss_b, expected, 1e-9);
    EXPECT_NEAR(loss.loss_c, expected, 1e-9);
    EXPECT_NEAR(loss.total, 8.0 * std::log(3.0), 1e-9);
}

TEST(StagedLoss, PerfectModelIsZero) {
    Corpus c = synth::synthetic_social_corpus(1, 8);
    std::vector<std::string> texts = {c.points[0].context, c.points[0].question, c.points[0].option_a,
                                      c.points[0].option_b, c.points[0].option_c};
    Vocabulary vocab = Vocabulary::build(texts, 0);
    PerfectModel model(vocab.size());
    const auto stages = build_stage_examples(c.points[0]);
    for (const auto& s : stages) model.learn(stage_sequence(vocab, s));
    LossBreakdown loss = staged_loss(model, vocab, stages);
    EXPECT_EQ(loss.loss_q, 0.0);
    EXPECT_EQ(loss.loss_a, 0.0);
    EXPECT_EQ(loss.loss_b, 0.0);
    EXPECT_EQ(loss.loss_c, 0.0);
    EXPECT_EQ(loss.total, 0.0);
}

TEST(StagedLoss, RejectsWrongStageSets) {
    Vocabulary vocab;
    UniformModel model(vocab.size(), {Vocabulary::kEnd});
    auto stages = build_stage_examples(point("C", "Q", "a", "b", "c"));
    EXPECT_EQ(code_of([&] { staged_loss(model, vocab, std::span(stages).first(3)); }), ErrorCode::kPrecondition);
    stages[3] = stages[2];
    EXPECT_EQ(code_of([&] { staged_loss(model, vocab, stages); }), ErrorCode::kPrecondition);
    // Zero-probability gold token gives an infinite loss.
    auto fresh = build_stage_examples(point("C", "Q", "a", "b", "c"));
    EXPECT_EQ(code_of([&] { staged_loss(model, vocab, fresh); }), ErrorCode::kNonFiniteLoss);
}

TEST(StagedLossProperty, TotalIsSumOfComponents) {
    Corpus c = synth::synthetic_social_corpus(20, 2);
    TrainConfig cfg = small_config();
    cfg.epochs = 0;
    TrainResult r = fine_tune_qa(c, c, cfg, Pipeline::kStagedInfilling);
    for (const DataPoint& p : c.points) {
        LossBreakdown l = staged_loss(r.handle, build_stage_examples(p));
        EXPECT_NEAR(l.total, l.loss_q + l.loss_a + l.loss_b + l.loss_c, 1e-6);
        EXPECT_GT(l.loss_q, 0.0);
    }
}

TEST(ExtractNewField, Rules) {
    EXPECT_EQ(extract_new_field("C <mask>", "C Q?"), "Q?");
    EXPECT_EQ(extract_new_field("C <mask>", "C' Q?"), "Q?");
    EXPECT_EQ(extract_new_field("a b c <mask>", "a b c d e"), "d e");
    EXPECT_EQ(code_of([] { extract_new_field("C <mask>", "C"); }), ErrorCode::kNoNewContent);
}

TEST(Pipeline, ParseNames) {
    EXPECT_EQ(parse_pipeline("staged"), Pipeline::kStagedInfilling);
    EXPECT_EQ(parse_pipeline("control_token"), Pipeline::kControlToken);
    EXPECT_EQ(code_of([] { parse_pipeline("bart"); }), ErrorCode::kPrecondition);
}

TEST(Training, EpochZeroIsNoOp) {
    Corpus c = synth::synthetic_social_corpus(10, 1);
    TrainConfig cfg = small_config();
    cfg.epochs = 0;
    TrainResult r = fine_tune_context_lm(c, c, cfg);
    EXPECT_TRUE(r.report.history.empty());
    EXPECT_EQ(r.report.optimizer_steps, 0u);
    EXPECT_DOUBLE_EQ(r.report.final_train_loss, r.report.initial_train_loss);
    auto untouched = make_language_model("tiny-mlp",
                                         TinyLmShape{r.handle.vocabulary.size(), 8, 16}, cfg.seed);
    auto* a = dynamic_cast<const TinyMlpLm*>(r.handle.model.get());
    auto* b = dynamic_cast<const TinyMlpLm*>(untouched.get());
    ASSERT_TRUE(a && b);
    EXPECT_TRUE(std::ranges::equal(a->parameters(), b->parameters()));
}

TEST(Training, Preconditions) {
    Corpus c = synth::synthetic_social_corpus(10, 1);
    Corpus empty;
    EXPECT_EQ(code_of([&] { fine_tune_context_lm(empty, c, small_config()); }), ErrorCode::kPrecondition);
    TrainConfig bad = small_config();
    bad.backend = "gpt2";
    EXPECT_EQ(code_of([&] { fine_tune_context_lm(c, c, bad); }), ErrorCode::kBackendUnavailable);
    bad = small_config();
    bad.learning_rate = 0.0;
    EXPECT_NE(code_of([&] { fine_tune_context_lm(c, c, bad); }), ErrorCode::kOk);
    bad = small_config();
    bad.batch_size = 0;
    EXPECT_NE(code_of([&] { fine_tune_qa(c, c, bad, Pipeline::kControlToken); }), ErrorCode::kOk);
}

TEST(Training, NonFiniteLossAborts) {
    Corpus c = synth::synthetic_social_corpus(10, 1);
    TrainConfig cfg = small_config();
    cfg.learning_rate = 1e300;
    cfg.epochs = 3;
    EXPECT_EQ(code_of([&] { fine_tune_context_lm(c, c, cfg); }), ErrorCode::kNonFiniteLoss);
}

TEST(Training, ContextLossDecreases) {
    Corpus c = synth::synthetic_social_corpus(200, 11);
    TrainConfig cfg = small_config();
    cfg.epochs = 3;
    cfg.embedding_dim = 16;
    cfg.hidden_dim = 32;
    TrainResult r = fine_tune_context_lm(c, c, cfg);
    ASSERT_EQ(r.report.history.size(), 3u);
    EXPECT_LT(r.report.final_train_loss, r.report.initial_train_loss);
}

class TrainedModels : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        Corpus all = synth::synthetic_social_corpus(160, 21);
        CorpusSplit s = split_corpus(all, SplitSpec{0.75, 0.15, 0.10, 1});
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.seed = 2;
        context_ = new ModelHandle(fine_tune_context_lm(s.train, s.eval, cfg).handle);
        staged_ = new ModelHandle(fine_tune_qa(s.train, s.eval, cfg, Pipeline::kStagedInfilling).handle);
        control_ = new ModelHandle(fine_tune_qa(s.train, s.eval, cfg, Pipeline::kControlToken).handle);
    }
    static void TearDownTestSuite() {
        delete context_;
        delete staged_;
        delete control_;
    }
    static inline ModelHandle* context_ = nullptr;
    static inline ModelHandle* staged_ = nullptr;
    static inline ModelHandle* control_ = nullptr;
};

TEST_F(TrainedModels, ContextGenerationIsDeterministicAndClean) {
    DecodeConfig d = default_context_decode();
    d.seed = 17;
    const std::string a = generate_context(*context_, d);
    EXPECT_EQ(a, generate_context(*context_, d));
    EXPECT_FALSE(find_reserved_marker(a).has_value());
    EXPECT_FALSE(trim(a).empty());
    EXPECT_LE(Vocabulary::split(a).size(), d.max_new_tokens);
}

TEST_F(TrainedModels, ImmediateEndIsEmptyGeneration) {
    // A model that only ever predicts the end token.
    ModelHandle h = *context_;
    h.model = std::make_shared<UniformModel>(h.vocabulary.size(), std::vector<TokenId>{Vocabulary::kEnd});
    DecodeConfig d = default_context_decode();
    d.max_new_tokens = 1;
    EXPECT_EQ(code_of([&] { generate_context(h, d); }), ErrorCode::kEmptyGeneration);
}

TEST_F(TrainedModels, StagedQaPassesContextThroughAndRepeats) {
    DecodeConfig d = default_field_decode();
    d.seed = 3;
    const std::string ctx = "Riley shared lunch with a new student.";
    CandidateTriple a = generate_qa(*staged_, ctx, d, Pipeline::kStagedInfilling);
    EXPECT_EQ(a.context, ctx);
    EXPECT_EQ(a.pipeline, Pipeline::kStagedInfilling);
    EXPECT_NO_THROW(validate_candidate(a));
    EXPECT_EQ(a, generate_qa(*staged_, ctx, d, Pipeline::kStagedInfilling));
}

TEST_F(TrainedModels, ControlQaDeterministic) {
    DecodeConfig d = default_field_decode();
    d.seed = 4;
    const std::string ctx = "Sam won the school spelling contest.";
    CandidateTriple a = generate_qa(*control_, ctx, d, Pipeline::kControlToken);
    EXPECT_EQ(a.context, ctx);
    EXPECT_EQ(a, generate_qa(*control_, ctx, d, Pipeline::kControlToken));
}

TEST_F(TrainedModels, ControlDecodeWithoutLastMarkerFailsParse) {
    // Budget too small to reach "<ansc>:".
    DecodeConfig d = default_field_decode();
    d.strategy = DecodeStrategy::kGreedy;
    d.max_new_tokens = 1;
    try {
        generate_qa(*control_, "Sam won the school spelling contest.", d, Pipeline::kControlToken);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kParseFailed);
    }
}

TEST_F(TrainedModels, PipelineMismatchAndEmptyContext) {
    DecodeConfig d = default_field_decode();
    EXPECT_EQ(code_of([&] { generate_qa(*staged_, "ctx here", d, Pipeline::kControlToken); }),
              ErrorCode::kPrecondition);
    EXPECT_EQ(code_of([&] { generate_qa(*staged_, "   ", d, Pipeline::kStagedInfilling); }),
              ErrorCode::kPrecondition);
}

TEST_F(TrainedModels, SaveLoadPreservesBehaviour) {
    const auto dir = std::filesystem::temp_directory_path() / "persp_test_model_rt";
    std::filesystem::remove_all(dir);
    save_model(*staged_, dir);
    ModelHandle back = load_model(dir);
    EXPECT_EQ(back.kind, ModelKind::kQa);
    EXPECT_EQ(back.pipeline, Pipeline::kStagedInfilling);
    DecodeConfig d = default_field_decode();
    d.seed = 9;
    const std::string ctx = "Alex found a wallet on the sidewalk.";
    EXPECT_EQ(generate_qa(back, ctx, d, Pipeline::kStagedInfilling),
              generate_qa(*staged_, ctx, d, Pipeline::kStagedInfilling));
    std::filesystem::remove_all(dir);
}

TEST(Decoding, NucleusSampling) {
    // p = (0.5, 0.3, 0.2); top_p 0.6 keeps the first two, renormalised.
    std::vector<double> lp = {std::log(0.5), std::log(0.3), std::log(0.2)};
    EXPECT_EQ(sample_nucleus(lp, 1.0, 0.6, 0.0), 0u);
    EXPECT_EQ(sample_nucleus(lp, 1.0, 0.6, 0.6), 0u);
    EXPECT_EQ(sample_nucleus(lp, 1.0, 0.6, 0.7), 1u);
    EXPECT_EQ(sample_nucleus(lp, 1.0, 0.6, 0.999), 1u);
    EXPECT_EQ(sample_nucleus(lp, 1.0, 1.0, 0.95), 2u);
    EXPECT_EQ(code_of([] { DecodeConfig d; d.top_p = 0.0; d.validate(); }), ErrorCode::kInvalidArgument);
    EXPECT_EQ(code_of([] { DecodeConfig d; d.max_new_tokens = 0; d.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(Config, KeyValueOverrides) {
    std::istringstream in(
        "# training\nepochs = 5\nbatch_size=2\nlearning_rate = 0.01\ndecode.top_p = 0.5\n"
        "decode.strategy = greedy\n");
    KeyValues kv = parse_key_values(in);
    TrainConfig t;
    apply_train_config(t, kv);
    EXPECT_EQ(t.epochs, 5u);
    EXPECT_EQ(t.batch_size, 2u);
    EXPECT_DOUBLE_EQ(t.learning_rate, 0.01);
    DecodeConfig d;
    apply_decode_config(d, kv);
    EXPECT_DOUBLE_EQ(d.top_p, 0.5);
    EXPECT_EQ(d.strategy, DecodeStrategy::kGreedy);
    KeyValues bad = {{"epoch", "3"}};
    EXPECT_EQ(code_of([&] { apply_train_config(t, bad); }), ErrorCode::kInvalidArgument);
}

TEST(TinyLm, AdamStepReducesLoss) {
    TinyMlpLm model(TinyLmShape{14, 4, 6}, 3);
    TrainSequence seq{{5, 11, 12}, {2, 5, 11}, {12, 13, 3}};
    const double base = model.sequence_nll(seq);
    EXPECT_GT(base, 0.0);
    // A single SGD-like Adam step with a tiny learning rate must reduce the loss.
    std::vector<TrainExample> batch = {{seq}};
    AdamConfig adam;
    adam.learning_rate = 1e-3;
    const double reported = model.train_step(batch, 1.0, adam);
    EXPECT_NEAR(reported, base, 1e-12);
    EXPECT_LT(model.sequence_nll(seq), base);
}
