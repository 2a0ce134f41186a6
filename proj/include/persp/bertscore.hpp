#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "persp/corpus.hpp"
#include "persp/generation.hpp"

namespace persp {

/// Contextual embeddings, one row per token.
using TokenEmbeddings = std::vector<std::vector<double>>;

class TokenEncoder {
public:
    virtual ~TokenEncoder() = default;
    virtual std::string id() const = 0;
    virtual TokenEmbeddings encode(std::string_view text) const = 0;
    /// Defaults to one encode() per text; process-backed encoders batch.
    virtual std::vector<TokenEmbeddings> encode_batch(std::span<const std::string> texts) const;
};

/// Fixed word -> vector table; whitespace tokens, no context mixing. Unknown
/// words raise EncoderFailure.
class LookupEncoder final : public TokenEncoder {
public:
    LookupEncoder(std::string id, std::unordered_map<std::string, std::vector<double>> table);
    std::string id() const override { return id_; }
    TokenEmbeddings encode(std::string_view text) const override;

private:
    std::string id_;
    std::unordered_map<std::string, std::vector<double>> table_;
};

/// Deterministic small encoder for tests and offline runs ("toy-hash").
/// Each lowercased word maps to a non-negative pseudo-random vector derived
/// from its hash; neighbours are mixed in so identical words in different
/// contexts get different (but similar) embeddings. All cosines are >= 0.
class HashingEncoder final : public TokenEncoder {
public:
    explicit HashingEncoder(std::size_t dim = 64, double neighbour_weight = 0.25);
    std::string id() const override { return "toy-hash"; }
    TokenEmbeddings encode(std::string_view text) const override;

private:
    std::vector<double> word_vector(std::string_view word) const;

    std::size_t dim_;
    double neighbour_weight_;
};

/// Runs an external command that speaks a JSON protocol on stdin/stdout:
/// request {"model": id, "texts": [...]}, response {"embeddings": [[[..]..]..]}.
/// Used to reach pretrained transformer encoders without linking them.
class SubprocessEncoder final : public TokenEncoder {
public:
    SubprocessEncoder(std::string id, std::string command);
    std::string id() const override { return id_; }
    TokenEmbeddings encode(std::string_view text) const override;
    std::vector<TokenEmbeddings> encode_batch(std::span<const std::string> texts) const override;

private:
    std::string id_;
    std::string command_;
};

/// The pretrained ids wired to the subprocess bridge.
std::span<const std::string_view> pretrained_encoder_ids() noexcept;

/// "toy-hash" or one of pretrained_encoder_ids(). The bridge command comes
/// from PERSP_ENCODER_CMD, defaulting to "python3 tools/hf_encoder.py".
std::unique_ptr<TokenEncoder> make_encoder(std::string_view id);

struct PairScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct BertScoreResult {
    std::vector<PairScore> pairs;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f1 = 0.0;  // arithmetic mean of per-pair F1
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Greedy maximal-cosine matching: precision matches each candidate token to
/// its best reference token, recall the reverse. No idf weighting and no
/// baseline rescaling.
PairScore greedy_match(const TokenEmbeddings& candidate, const TokenEmbeddings& reference);

BertScoreResult bert_score(std::span<const std::string> candidates,
                           std::span<const std::string> references, const TokenEncoder& encoder);

enum class Slice { kQ, kABC, kQABC };
std::string_view to_string(Slice slice) noexcept;
inline constexpr std::array<Slice, 3> kAllSlices = {Slice::kQABC, Slice::kABC, Slice::kQ};

/// Space-joined fields of the slice in Q, A, B, C order.
std::string slice_text(std::string_view question, std::string_view a, std::string_view b,
                       std::string_view c, Slice slice);

struct ScoreReport {
    std::string encoder_id;
    Slice slice = Slice::kQABC;
    double precision = 0.0;  // mean over pairs
    double recall = 0.0;     // mean over pairs
    double f1 = 0.0;         // harmonic mean of the two means
    std::size_t n_pairs = 0;
};

/// One report per (encoder, slice), encoders in the given order and slices
/// in kAllSlices order.
std::vector<ScoreReport> slice_eval(const Corpus& test, std::span<const CandidateTriple> generated,
                                    std::span<const TokenEncoder* const> encoders);

}  // namespace persp
