#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "persp/language_model.hpp"

namespace persp {

enum class DecodeStrategy { kNucleus, kGreedy };

DecodeStrategy parse_decode_strategy(std::string_view name);
std::string_view to_string(DecodeStrategy strategy) noexcept;

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::kNucleus;
    double top_p = 0.9;
    double temperature = 1.0;
    std::size_t max_new_tokens = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DecodeResult {
    std::vector<TokenId> tokens;  // excludes the stop token
    bool stopped = false;         // stop token was produced
};

/// Samples up to `max_new_tokens` tokens after `history`. Banned ids get zero
/// probability. Pure in (model, inputs, config): the RNG is seeded from
/// `config.seed` alone.
DecodeResult decode(const LanguageModel& model, std::span<const TokenId> source,
                    std::vector<TokenId> history, const DecodeConfig& config, TokenId stop_token,
                    std::span<const TokenId> banned);

/// Draws one index from log-probabilities under temperature and top-p.
/// Exposed for tests; `uniform` must lie in [0, 1).
std::size_t sample_nucleus(std::span<const double> log_probs, double temperature, double top_p,
                           double uniform);

}  // namespace persp
