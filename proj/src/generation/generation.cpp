#include "persp/generation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
namespace {

using nlohmann::json;

constexpr std::array<Stage, 4> kStages = {Stage::kQ, Stage::kA, Stage::kB, Stage::kC};

// Examples with their loss normaliser: target-token count for causal
// pipelines, 1 per record for staged infilling.
struct ExampleSet {
    std::vector<TrainExample> examples;
    std::vector<double> weights;
};

template <typename T>
std::vector<T> keep_last(std::vector<T> v, std::size_t max_tokens) {
    if (max_tokens == 0 || v.size() <= max_tokens) return v;
    return std::vector<T>(v.end() - static_cast<std::ptrdiff_t>(max_tokens), v.end());
}

// Truncates to max_tokens while keeping the terminating end token.
std::vector<TokenId> with_end(std::vector<TokenId> body, std::size_t max_tokens) {
    if (max_tokens != 0 && body.size() + 1 > max_tokens) body.resize(max_tokens - 1);
    body.push_back(Vocabulary::kEnd);
    return body;
}

std::vector<TokenId> banned_specials(std::initializer_list<TokenId> allowed) {
    std::vector<TokenId> banned;
    for (TokenId id = 0; id < Vocabulary::kNumSpecial; ++id) {
        if (std::find(allowed.begin(), allowed.end(), id) == allowed.end()) banned.push_back(id);
    }
    return banned;
}

TrainSequence context_sequence(const Vocabulary& vocab, const DataPoint& point,
                               std::size_t max_tokens) {
    TrainSequence seq;
    seq.history = {Vocabulary::kStart};
    seq.target = with_end(vocab.encode(point.context), max_tokens);
    return seq;
}

TrainSequence control_sequence(const Vocabulary& vocab, const DataPoint& point,
                               std::size_t max_tokens) {
    const std::string text = render_control_token_text(point);
    const DataPoint parsed = parse_control_token_text(text);
    if (parsed.context != point.context || parsed.question != point.question ||
        parsed.option_a != point.option_a || parsed.option_b != point.option_b ||
        parsed.option_c != point.option_c) {
        throw Error(ErrorCode::kPrecondition,
                    "control-token text does not round-trip for context '" + point.context + "'");
    }
    std::vector<TokenId> tokens = vocab.encode(text);
    TrainSequence seq;
    seq.history = {tokens.front()};
    tokens.erase(tokens.begin());
    tokens.pop_back();
    seq.target = with_end(std::move(tokens), max_tokens);
    return seq;
}

ExampleSet make_examples(const Corpus& corpus, const Vocabulary& vocab, ModelKind kind,
                         std::optional<Pipeline> pipeline, std::size_t max_tokens) {
    ExampleSet set;
    for (const DataPoint& point : corpus.points) {
        TrainExample example;
        if (kind == ModelKind::kContext) {
            example.push_back(context_sequence(vocab, point, max_tokens));
        } else if (*pipeline == Pipeline::kControlToken) {
            example.push_back(control_sequence(vocab, point, max_tokens));
        } else {
            for (const StageExample& stage : build_stage_examples(point)) {
                example.push_back(stage_sequence(vocab, stage, max_tokens));
            }
        }
        double weight = 1.0;
        if (kind == ModelKind::kContext || *pipeline == Pipeline::kControlToken) {
            weight = static_cast<double>(example.front().target.size());
        }
        set.examples.push_back(std::move(example));
        set.weights.push_back(weight);
    }
    return set;
}

double evaluate(const LanguageModel& model, const ExampleSet& set) {
    double nll = 0.0;
    const double norm = std::accumulate(set.weights.begin(), set.weights.end(), 0.0);
    for (const TrainExample& example : set.examples) {
        for (const TrainSequence& seq : example) nll += model.sequence_nll(seq);
    }
    const double loss = nll / norm;
    if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "non-finite evaluation loss");
    return loss;
}

std::vector<std::string> vocabulary_texts(const Corpus& corpus, ModelKind kind) {
    std::vector<std::string> texts;
    for (const DataPoint& p : corpus.points) {
        texts.push_back(p.context);
        if (kind == ModelKind::kQa) {
            texts.push_back(p.question);
            texts.push_back(p.option_a);
            texts.push_back(p.option_b);
            texts.push_back(p.option_c);
        }
    }
    return texts;
}

TrainResult run_training(const Corpus& train, const Corpus& eval, const TrainConfig& config,
                         ModelKind kind, std::optional<Pipeline> pipeline,
                         const EpochCallback& on_epoch) {
    if (train.empty()) throw Error(ErrorCode::kPrecondition, "training corpus is empty");
    if (eval.empty()) throw Error(ErrorCode::kPrecondition, "evaluation corpus is empty");
    config.validate();

    ModelHandle handle;
    handle.kind = kind;
    handle.pipeline = pipeline;
    handle.train_config = config;
    const std::vector<std::string> texts = vocabulary_texts(train, kind);
    handle.vocabulary = Vocabulary::build(texts);
    TinyLmShape shape{handle.vocabulary.size(), config.embedding_dim, config.hidden_dim};
    handle.model = make_language_model(config.backend, shape, config.seed);

    const ExampleSet train_set = make_examples(train, handle.vocabulary, kind, pipeline, config.max_tokens);
    const ExampleSet eval_set = make_examples(eval, handle.vocabulary, kind, pipeline, config.max_tokens);

    TrainReport report;
    report.initial_train_loss = evaluate(*handle.model, train_set);
    report.initial_eval_loss = evaluate(*handle.model, eval_set);

    const AdamConfig adam{config.learning_rate};
    std::vector<std::size_t> order(train_set.examples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng rng(mix_seed(config.seed, epoch));
        rng.shuffle(order);
        double weighted = 0.0;
        double weight_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<TrainExample> batch;
            double normalizer = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(train_set.examples[order[i]]);
                normalizer += train_set.weights[order[i]];
            }
            const double loss = handle.model->train_step(batch, normalizer, adam);
            if (!std::isfinite(loss)) {
                throw Error(ErrorCode::kNonFiniteLoss, "epoch " + std::to_string(epoch) +
                                                           ", batch " + std::to_string(batch_index));
            }
            ++report.optimizer_steps;
            weighted += loss * normalizer;
            weight_sum += normalizer;
        }
        EpochRecord record{epoch, weighted / weight_sum, evaluate(*handle.model, eval_set)};
        report.history.push_back(record);
        if (on_epoch) on_epoch(record);
    }
    report.final_train_loss = evaluate(*handle.model, train_set);
    report.final_eval_loss = report.history.empty() ? report.initial_eval_loss
                                                    : report.history.back().eval_loss;
    return {std::move(handle), report};
}

void require_kind(const ModelHandle& handle, ModelKind kind) {
    if (!handle.model) throw Error(ErrorCode::kPrecondition, "model handle is empty");
    if (handle.kind != kind) {
        throw Error(ErrorCode::kPrecondition, "expected a " + std::string(to_string(kind)) +
                                                  " model, got " +
                                                  std::string(to_string(handle.kind)));
    }
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::size_t from) {
    std::string out;
    for (std::size_t i = from; i < parts.size(); ++i) {
        if (!out.empty()) out += ' ';
        out += parts[i];
    }
    return out;
}

CandidateTriple generate_staged(const ModelHandle& handle, std::string_view context,
                                const DecodeConfig& config) {
    const Vocabulary& vocab = handle.vocabulary;
    const std::vector<TokenId> banned = banned_specials({Vocabulary::kEnd});
    std::array<std::string, 4> fields;
    std::string prefix = trim(context);
    for (std::size_t k = 0; k < kStages.size(); ++k) {
        const std::string input = prefix + " " + std::string(markers::kMask);
        const std::vector<TokenId> source = vocab.encode(input);
        std::vector<TokenId> history = {Vocabulary::kStart};
        history.insert(history.end(), source.begin(), source.end());
        DecodeConfig stage_config = config;
        stage_config.seed = mix_seed(config.seed, k + 1);
        const DecodeResult result = decode(*handle.model, source, std::move(history), stage_config,
                                           Vocabulary::kEnd, banned);
        std::string output = prefix;
        if (!result.tokens.empty()) output += " " + vocab.decode(result.tokens);
        try {
            fields[k] = extract_new_field(input, output);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kNoNewContent) throw;
            throw Error(ErrorCode::kFieldExtractionFailed,
                        "stage " + std::string(to_string(kStages[k])) + " produced no new text");
        }
        prefix += " " + fields[k];
    }
    return {std::string(context), fields[0], fields[1], fields[2], fields[3],
            Pipeline::kStagedInfilling, config.seed};
}

CandidateTriple generate_control(const ModelHandle& handle, std::string_view context,
                                 const DecodeConfig& config) {
    const Vocabulary& vocab = handle.vocabulary;
    const std::string prompt = std::string(markers::kStart) + " " + std::string(markers::kContext) +
                               " " + trim(context) + " " + std::string(markers::kQuestion);
    const std::vector<TokenId> banned =
        banned_specials({Vocabulary::kEnd, Vocabulary::kAnswerAMarker, Vocabulary::kAnswerBMarker,
                         Vocabulary::kAnswerCMarker});
    // One field budget for each of the four generated fields plus their markers.
    DecodeConfig total = config;
    total.max_new_tokens = 4 * config.max_new_tokens + 3;
    const DecodeResult result =
        decode(*handle.model, {}, vocab.encode(prompt), total, Vocabulary::kEnd, banned);
    if (!result.stopped) {
        throw Error(ErrorCode::kParseFailed, "missing marker " + std::string(markers::kEnd));
    }
    const std::string text =
        prompt + " " + vocab.decode(result.tokens) + " " + std::string(markers::kEnd);
    const DataPoint parsed = parse_control_token_text(text);
    return {std::string(context), parsed.question,   parsed.option_a, parsed.option_b,
            parsed.option_c,      Pipeline::kControlToken, config.seed};
}

json train_config_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},       {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate}, {"optimizer", c.optimizer},
            {"seed", c.seed},           {"max_tokens", c.max_tokens},
            {"backend", c.backend},     {"embedding_dim", c.embedding_dim},
            {"hidden_dim", c.hidden_dim}};
}

}  // namespace

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::kQ: return "Q";
        case Stage::kA: return "A";
        case Stage::kB: return "B";
        case Stage::kC: return "C";
    }
    return "?";
}

Pipeline parse_pipeline(std::string_view name) {
    if (name == "staged" || name == "staged_infilling") return Pipeline::kStagedInfilling;
    if (name == "control" || name == "control_token") return Pipeline::kControlToken;
    throw Error(ErrorCode::kPrecondition, "unknown pipeline '" + std::string(name) + "'");
}

std::string_view to_string(Pipeline pipeline) noexcept {
    return pipeline == Pipeline::kControlToken ? "control_token" : "staged_infilling";
}

std::string_view to_string(ModelKind kind) noexcept {
    return kind == ModelKind::kContext ? "context" : "qa";
}

void validate_candidate(const CandidateTriple& c) {
    const std::array<std::pair<const char*, const std::string*>, 5> fields = {{
        {"context", &c.context},
        {"question", &c.question},
        {"option_a", &c.option_a},
        {"option_b", &c.option_b},
        {"option_c", &c.option_c},
    }};
    for (const auto& [name, value] : fields) {
        if (trim(*value).empty()) {
            throw Error(ErrorCode::kParseFailed, std::string(name) + " is empty");
        }
        if (auto marker = find_reserved_marker(*value)) {
            throw Error(ErrorCode::kParseFailed,
                        std::string(name) + " contains marker " + std::string(*marker));
        }
    }
}

void TrainConfig::validate() const {
    if (batch_size < 1 || max_tokens < 2 || embedding_dim < 1 || hidden_dim < 1) {
        throw Error(ErrorCode::kInvalidArgument, "training counts must be >= 1 (max_tokens >= 2)");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
    }
    if (optimizer != "adam") {
        throw Error(ErrorCode::kInvalidArgument, "unsupported optimizer '" + optimizer + "'");
    }
}

DecodeConfig default_context_decode() {
    DecodeConfig c;
    c.max_new_tokens = 64;
    return c;
}

DecodeConfig default_field_decode() {
    DecodeConfig c;
    c.max_new_tokens = 24;
    return c;
}

std::array<StageExample, 4> build_stage_examples(const DataPoint& point) {
    validate_data_point(point);
    const std::array<const std::string*, 4> fields = {&point.question, &point.option_a,
                                                      &point.option_b, &point.option_c};
    std::array<StageExample, 4> stages;
    std::string prefix = point.context;
    for (std::size_t k = 0; k < 4; ++k) {
        StageExample& s = stages[k];
        s.stage = kStages[k];
        s.input_text = prefix + " " + std::string(markers::kMask);
        s.target_text = prefix + " " + *fields[k];
        s.field = *fields[k];
        s.target_len = Vocabulary::split(*fields[k]).size() + 1;
        prefix = s.target_text;
    }
    return stages;
}

TrainSequence stage_sequence(const Vocabulary& vocabulary, const StageExample& stage,
                             std::size_t max_tokens) {
    TrainSequence seq;
    seq.source = keep_last(vocabulary.encode(stage.input_text), max_tokens);
    seq.history = {Vocabulary::kStart};
    seq.history.insert(seq.history.end(), seq.source.begin(), seq.source.end());
    seq.target = with_end(vocabulary.encode(stage.field), max_tokens);
    return seq;
}

LossBreakdown staged_loss(const LanguageModel& model, const Vocabulary& vocabulary,
                          std::span<const StageExample> stages) {
    if (stages.size() != 4) {
        throw Error(ErrorCode::kPrecondition, "expected exactly four stages, got " +
                                                  std::to_string(stages.size()));
    }
    std::array<bool, 4> seen{};
    for (const StageExample& stage : stages) {
        const auto k = static_cast<std::size_t>(stage.stage);
        if (seen[k]) {
            throw Error(ErrorCode::kPrecondition,
                        "duplicate stage " + std::string(to_string(stage.stage)));
        }
        seen[k] = true;
    }
    LossBreakdown out;
    for (const StageExample& stage : stages) {
        const double loss = model.sequence_nll(stage_sequence(vocabulary, stage));
        if (!std::isfinite(loss)) {
            throw Error(ErrorCode::kNonFiniteLoss,
                        "stage " + std::string(to_string(stage.stage)));
        }
        switch (stage.stage) {
            case Stage::kQ: out.loss_q = loss; break;
            case Stage::kA: out.loss_a = loss; break;
            case Stage::kB: out.loss_b = loss; break;
            case Stage::kC: out.loss_c = loss; break;
        }
    }
    out.total = out.loss_q + out.loss_a + out.loss_b + out.loss_c;
    return out;
}

LossBreakdown staged_loss(const ModelHandle& handle, std::span<const StageExample> stages) {
    if (!handle.model) throw Error(ErrorCode::kPrecondition, "model handle is empty");
    return staged_loss(*handle.model, handle.vocabulary, stages);
}

std::string extract_new_field(std::string_view prompt_prefix, std::string_view full_output) {
    if (trim(full_output).empty()) throw Error(ErrorCode::kPrecondition, "output is empty");
    std::vector<std::string> prompt = whitespace_tokens(prompt_prefix);
    if (!prompt.empty() && prompt.back() == markers::kMask) prompt.pop_back();
    const std::vector<std::string> output = whitespace_tokens(full_output);

    std::size_t common = 0;
    while (common < prompt.size() && common < output.size() && prompt[common] == output[common]) {
        ++common;
    }
    std::size_t skip = common;
    if (common < prompt.size() && output.size() >= prompt.size()) {
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < prompt.size(); ++i) mismatches += prompt[i] != output[i];
        if (mismatches <= 1) skip = prompt.size();
    }
    std::string remainder = join(output, skip);
    if (remainder.empty()) throw Error(ErrorCode::kNoNewContent, "output only echoes the prompt");
    return remainder;
}

TrainResult fine_tune_context_lm(const Corpus& train, const Corpus& eval, const TrainConfig& config,
                                 const EpochCallback& on_epoch) {
    return run_training(train, eval, config, ModelKind::kContext, std::nullopt, on_epoch);
}

TrainResult fine_tune_qa(const Corpus& train, const Corpus& eval, const TrainConfig& config,
                         Pipeline pipeline, const EpochCallback& on_epoch) {
    if (pipeline != Pipeline::kStagedInfilling && pipeline != Pipeline::kControlToken) {
        throw Error(ErrorCode::kPrecondition, "unknown pipeline");
    }
    return run_training(train, eval, config, ModelKind::kQa, pipeline, on_epoch);
}

std::string generate_context(const ModelHandle& handle, const DecodeConfig& config) {
    require_kind(handle, ModelKind::kContext);
    const std::vector<TokenId> banned = banned_specials({Vocabulary::kEnd});
    const DecodeResult result =
        decode(*handle.model, {}, {Vocabulary::kStart}, config, Vocabulary::kEnd, banned);
    if (result.tokens.empty()) {
        throw Error(ErrorCode::kEmptyGeneration, "end token produced immediately");
    }
    return handle.vocabulary.decode(result.tokens);
}

CandidateTriple generate_qa(const ModelHandle& handle, std::string_view context,
                            const DecodeConfig& config, Pipeline pipeline) {
    require_kind(handle, ModelKind::kQa);
    if (handle.pipeline != pipeline) {
        throw Error(ErrorCode::kPrecondition, "model was trained for " +
                                                  std::string(to_string(*handle.pipeline)));
    }
    if (trim(context).empty()) throw Error(ErrorCode::kPrecondition, "context is empty");
    if (auto marker = find_reserved_marker(context)) {
        throw Error(ErrorCode::kMarkerCollision, "context contains " + std::string(*marker));
    }
    CandidateTriple candidate = pipeline == Pipeline::kStagedInfilling
                                    ? generate_staged(handle, context, config)
                                    : generate_control(handle, context, config);
    validate_candidate(candidate);
    return candidate;
}

void save_model(const ModelHandle& handle, const std::filesystem::path& dir) {
    if (!handle.model) throw Error(ErrorCode::kPrecondition, "model handle is empty");
    std::filesystem::create_directories(dir);
    const auto& tokens = handle.vocabulary.tokens();
    json meta = {
        {"kind", std::string(to_string(handle.kind))},
        {"pipeline", handle.pipeline ? json(std::string(to_string(*handle.pipeline))) : json()},
        {"vocabulary", std::vector<std::string>(tokens.begin() + Vocabulary::kNumSpecial, tokens.end())},
        {"train_config", train_config_json(handle.train_config)},
    };
    std::ofstream out(dir / "model.json");
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "model.json").string());
    out << meta.dump(2) << '\n';
    handle.model->save(dir);
}

ModelHandle load_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "model.json");
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + (dir / "model.json").string());
    ModelHandle handle;
    try {
        const json meta = json::parse(in);
        const std::string kind = meta.at("kind").get<std::string>();
        if (kind == "context") {
            handle.kind = ModelKind::kContext;
        } else if (kind == "qa") {
            handle.kind = ModelKind::kQa;
        } else {
            throw Error(ErrorCode::kIo, "unknown model kind '" + kind + "'");
        }
        if (!meta.at("pipeline").is_null()) {
            handle.pipeline = parse_pipeline(meta.at("pipeline").get<std::string>());
        }
        handle.vocabulary = Vocabulary::from_tokens(meta.at("vocabulary").get<std::vector<std::string>>());
        const json& tc = meta.at("train_config");
        TrainConfig& c = handle.train_config;
        c.epochs = tc.at("epochs").get<std::size_t>();
        c.batch_size = tc.at("batch_size").get<std::size_t>();
        c.learning_rate = tc.at("learning_rate").get<double>();
        c.optimizer = tc.at("optimizer").get<std::string>();
        c.seed = tc.at("seed").get<std::uint64_t>();
        c.max_tokens = tc.at("max_tokens").get<std::size_t>();
        c.backend = tc.at("backend").get<std::string>();
        c.embedding_dim = tc.at("embedding_dim").get<std::size_t>();
        c.hidden_dim = tc.at("hidden_dim").get<std::size_t>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kIo, std::string("model.json: ") + e.what());
    }
    if (handle.kind == ModelKind::kQa && !handle.pipeline) {
        throw Error(ErrorCode::kIo, "qa model without a pipeline");
    }
    handle.model = load_language_model(dir);
    if (handle.model->vocab_size() != handle.vocabulary.size()) {
        throw Error(ErrorCode::kIo, "vocabulary size does not match the model weights");
    }
    return handle;
}

}  // namespace persp
