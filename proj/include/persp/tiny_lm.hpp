#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "persp/language_model.hpp"

namespace persp {

/// Small feed-forward language model used as the in-tree training backend.
///
/// The next-token distribution is a one-hidden-layer MLP over six feature
/// blocks: the embeddings of the three previous tokens, the embedding of the
/// most recent special token in the history (the active segment), a bucketed
/// distance from that segment start, and the mean of a separate source-side
/// embedding table over the encoder input. With an empty source it is a plain
/// causal LM; with a source it acts as a bag-of-words conditional decoder.
class TinyMlpLm final : public LanguageModel {
public:
    static constexpr std::size_t kWindow = 3;
    static constexpr std::size_t kPositionBuckets = 16;
    static constexpr std::size_t kBlocks = kWindow + 3;

    TinyMlpLm(const TinyLmShape& shape, std::uint64_t seed);

    static std::unique_ptr<TinyMlpLm> load(const std::filesystem::path& dir);

    std::string backend_id() const override { return "tiny-mlp"; }
    std::size_t vocab_size() const override { return shape_.vocab_size; }
    const TinyLmShape& shape() const noexcept { return shape_; }

    std::vector<double> next_log_probs(std::span<const TokenId> source,
                                       std::span<const TokenId> history) const override;
    double sequence_nll(const TrainSequence& seq) const override;
    double train_step(std::span<const TrainExample> batch, double normalizer,
                      const AdamConfig& adam) override;
    void save(const std::filesystem::path& dir) const override;

    std::span<const double> parameters() const noexcept { return params_; }

private:
    struct Features {
        std::array<TokenId, kWindow> previous{};
        TokenId segment = 0;
        std::size_t position = 0;
    };
    struct Activations;

    void allocate();
    Features features_at(std::span<const TokenId> history) const;
    void source_mean(std::span<const TokenId> source, std::vector<double>& out) const;
    void forward(const Features& f, const std::vector<double>& src_mean, Activations& act) const;
    double accumulate_sequence(const TrainSequence& seq, double scale,
                               std::vector<double>* grads) const;

    TinyLmShape shape_;
    std::size_t input_dim_ = 0;
    // Offsets into params_.
    std::size_t off_token_emb_ = 0, off_source_emb_ = 0, off_pos_emb_ = 0;
    std::size_t off_w_ = 0, off_bh_ = 0, off_out_ = 0, off_bo_ = 0;

    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
    std::uint64_t adam_steps_ = 0;
};

}  // namespace persp
