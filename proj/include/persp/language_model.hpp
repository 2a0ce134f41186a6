#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "persp/vocabulary.hpp"

namespace persp {

/// One scored sequence. `history` is what the decoder has already seen
/// (never scored); `target` tokens are scored left to right, each conditioned
/// on the source, the history and the preceding targets.
struct TrainSequence {
    std::vector<TokenId> source;
    std::vector<TokenId> history;
    std::vector<TokenId> target;
};

/// An optimisation example: its loss is the sum of its sequences' losses.
using TrainExample = std::vector<TrainSequence>;

struct AdamConfig {
    double learning_rate = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Narrow backend contract. Implementations must make the const members safe
/// to call concurrently.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    virtual std::string backend_id() const = 0;
    virtual std::size_t vocab_size() const = 0;

    /// Natural-log probabilities over the vocabulary for the next token.
    virtual std::vector<double> next_log_probs(std::span<const TokenId> source,
                                               std::span<const TokenId> history) const = 0;

    /// Summed negative log-likelihood of `seq.target`.
    virtual double sequence_nll(const TrainSequence& seq) const;

    /// One optimizer step on sum(example losses) / normalizer. Returns that
    /// normalised loss as measured before the update.
    virtual double train_step(std::span<const TrainExample> batch, double normalizer,
                              const AdamConfig& adam) = 0;

    virtual void save(const std::filesystem::path& dir) const = 0;
};

struct TinyLmShape {
    std::size_t vocab_size = 0;
    std::size_t embedding_dim = 32;
    std::size_t hidden_dim = 128;
};

/// Creates an untrained backend by id. Only "tiny-mlp" ships in-tree; any
/// other id raises BackendUnavailable.
std::unique_ptr<LanguageModel> make_language_model(const std::string& backend_id,
                                                   const TinyLmShape& shape, std::uint64_t seed);

/// Loads whatever backend `save` wrote into `dir`.
std::unique_ptr<LanguageModel> load_language_model(const std::filesystem::path& dir);

}  // namespace persp
