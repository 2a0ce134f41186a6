#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "persp/corpus.hpp"
#include "persp/decoding.hpp"
#include "persp/language_model.hpp"
#include "persp/vocabulary.hpp"

namespace persp {

enum class Stage { kQ, kA, kB, kC };
std::string_view to_string(Stage stage) noexcept;

enum class Pipeline { kStagedInfilling, kControlToken };

/// Accepts "staged", "staged_infilling", "control" and "control_token";
/// anything else is a precondition failure.
Pipeline parse_pipeline(std::string_view name);
std::string_view to_string(Pipeline pipeline) noexcept;

enum class ModelKind { kContext, kQa };
std::string_view to_string(ModelKind kind) noexcept;

/// One step of the staged infilling objective. `input_text` is the known
/// prefix followed by a single mask token; `target_text` replaces the mask
/// with the gold field. `target_len` counts the scored decoder tokens: the
/// field's tokens plus the terminating end token.
struct StageExample {
    Stage stage = Stage::kQ;
    std::string input_text;
    std::string target_text;
    std::string field;
    std::size_t target_len = 0;
};

struct LossBreakdown {
    double loss_q = 0.0;
    double loss_a = 0.0;
    double loss_b = 0.0;
    double loss_c = 0.0;
    double total = 0.0;
};

struct CandidateTriple {
    std::string context;
    std::string question;
    std::string option_a;
    std::string option_b;
    std::string option_c;
    Pipeline pipeline = Pipeline::kStagedInfilling;
    std::uint64_t generation_seed = 0;

    friend bool operator==(const CandidateTriple&, const CandidateTriple&) = default;
};

/// Throws ParseFailed if a field is blank or carries a mask/control marker.
void validate_candidate(const CandidateTriple& candidate);

struct TrainConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 4;
    double learning_rate = 5e-3;
    std::string optimizer = "adam";
    std::uint64_t seed = 0;
    std::size_t max_tokens = 128;
    // Backend knobs.
    std::string backend = "tiny-mlp";
    std::size_t embedding_dim = 32;
    std::size_t hidden_dim = 128;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean of the pre-update batch losses
    double eval_loss = 0.0;   // full pass over the eval corpus after the epoch
};

/// Loss units: mean per-token cross-entropy for causal pipelines; mean
/// per-record total staged loss for staged infilling.
struct TrainReport {
    double initial_train_loss = 0.0;
    double initial_eval_loss = 0.0;
    std::vector<EpochRecord> history;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    std::size_t optimizer_steps = 0;
};

/// A trained model plus everything needed to tokenise for it.
struct ModelHandle {
    ModelKind kind = ModelKind::kContext;
    std::optional<Pipeline> pipeline;
    Vocabulary vocabulary;
    std::shared_ptr<LanguageModel> model;
    TrainConfig train_config;
};

void save_model(const ModelHandle& handle, const std::filesystem::path& dir);
ModelHandle load_model(const std::filesystem::path& dir);

/// Called after every epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
    ModelHandle handle;
    TrainReport report;
};

/// Causal LM over "<|startoftext|> context <|endoftext|>" texts only.
TrainResult fine_tune_context_lm(const Corpus& train, const Corpus& eval, const TrainConfig& config,
                                 const EpochCallback& on_epoch = {});

TrainResult fine_tune_qa(const Corpus& train, const Corpus& eval, const TrainConfig& config,
                         Pipeline pipeline, const EpochCallback& on_epoch = {});

/// Decodes one context from the start token. Throws EmptyGeneration if the
/// end token comes first.
std::string generate_context(const ModelHandle& handle, const DecodeConfig& config);

CandidateTriple generate_qa(const ModelHandle& handle, std::string_view context,
                            const DecodeConfig& config, Pipeline pipeline);

/// Stages Q, A, B, C in that order, each conditioned on the gold fields that
/// precede it.
std::array<StageExample, 4> build_stage_examples(const DataPoint& point);

/// Token-level cross-entropy (summed, natural log) of each stage's field and
/// end token given its masked input.
LossBreakdown staged_loss(const LanguageModel& model, const Vocabulary& vocabulary,
                          std::span<const StageExample> stages);
LossBreakdown staged_loss(const ModelHandle& handle, std::span<const StageExample> stages);

/// Isolates the newly generated field from a seq2seq output that echoes the
/// prompt. Prompt and output are compared token-wise: the output's leading
/// tokens are treated as the echoed prompt if they match it with at most one
/// substituted token, otherwise only the longest common prefix is removed.
std::string extract_new_field(std::string_view prompt_prefix, std::string_view full_output);

/// Decoder-side encoding of a staged example, shared by training and
/// scoring.
TrainSequence stage_sequence(const Vocabulary& vocabulary, const StageExample& stage,
                             std::size_t max_tokens = 0);

/// Default per-field and per-context decode settings.
DecodeConfig default_context_decode();
DecodeConfig default_field_decode();

/// Candidate files are JSON Lines with keys context, question, option_a,
/// option_b, option_c and optional pipeline / generation_seed. The corpus
/// spellings answerA/answerB/answerC are accepted on input.
std::string candidate_to_json(const CandidateTriple& candidate);
CandidateTriple candidate_from_json(std::string_view line);
std::vector<CandidateTriple> load_candidates(const std::filesystem::path& path);
void write_candidates(std::span<const CandidateTriple> candidates, std::ostream& out);
void write_candidates(std::span<const CandidateTriple> candidates, const std::filesystem::path& path);

}  // namespace persp
