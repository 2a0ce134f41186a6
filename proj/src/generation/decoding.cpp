#include "persp/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {

DecodeStrategy parse_decode_strategy(std::string_view name) {
    if (name == "nucleus") return DecodeStrategy::kNucleus;
    if (name == "greedy") return DecodeStrategy::kGreedy;
    throw Error(ErrorCode::kInvalidArgument, "unknown decode strategy '" + std::string(name) + "'");
}

std::string_view to_string(DecodeStrategy strategy) noexcept {
    return strategy == DecodeStrategy::kGreedy ? "greedy" : "nucleus";
}

void DecodeConfig::validate() const {
    if (!(top_p > 0.0 && top_p <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "top_p must lie in (0, 1]");
    }
    if (!(temperature > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be > 0");
    if (max_new_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "max_new_tokens must be >= 1");
}

std::size_t sample_nucleus(std::span<const double> log_probs, double temperature, double top_p,
                           double uniform) {
    const std::size_t n = log_probs.size();
    std::vector<double> probs(n);
    double max = -std::numeric_limits<double>::infinity();
    for (double lp : log_probs) max = std::max(max, lp / temperature);
    if (!std::isfinite(max)) throw Error(ErrorCode::kInvalidArgument, "no token has mass");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        probs[i] = std::exp(log_probs[i] / temperature - max);
        total += probs[i];
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Ties resolve by index so the kept set never depends on sort internals.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probs[a] != probs[b] ? probs[a] > probs[b] : a < b;
    });
    std::size_t kept = 0;
    double mass = 0.0;
    while (kept < n && probs[order[kept]] > 0.0) {
        mass += probs[order[kept]];
        ++kept;
        if (mass >= top_p * total) break;
    }
    double target = uniform * mass;
    for (std::size_t i = 0; i < kept; ++i) {
        target -= probs[order[i]];
        if (target < 0.0) return order[i];
    }
    return order[kept - 1];
}

DecodeResult decode(const LanguageModel& model, std::span<const TokenId> source,
                    std::vector<TokenId> history, const DecodeConfig& config, TokenId stop_token,
                    std::span<const TokenId> banned) {
    config.validate();
    Rng rng(mix_seed(config.seed, 0xdec0de));
    DecodeResult result;
    for (std::size_t step = 0; step < config.max_new_tokens; ++step) {
        std::vector<double> lp = model.next_log_probs(source, history);
        for (TokenId id : banned) {
            if (id >= 0 && static_cast<std::size_t>(id) < lp.size() && id != stop_token) {
                lp[static_cast<std::size_t>(id)] = -std::numeric_limits<double>::infinity();
            }
        }
        std::size_t choice = 0;
        if (config.strategy == DecodeStrategy::kGreedy) {
            choice = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        } else {
            choice = sample_nucleus(lp, config.temperature, config.top_p, rng.uniform());
        }
        const auto token = static_cast<TokenId>(choice);
        if (token == stop_token) {
            result.stopped = true;
            break;
        }
        result.tokens.push_back(token);
        history.push_back(token);
    }
    return result;
}

}  // namespace persp
