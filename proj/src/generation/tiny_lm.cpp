#include "persp/tiny_lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
namespace {

constexpr char kWeightsMagic[8] = {'P', 'E', 'R', 'S', 'P', 'L', 'M', '1'};
constexpr double kMaxGradNorm = 5.0;

void log_softmax_inplace(std::vector<double>& logits) {
    const double max = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - max);
    const double log_z = max + std::log(sum);
    for (double& v : logits) v -= log_z;
}

}  // namespace

struct TinyMlpLm::Activations {
    std::vector<double> input;
    std::vector<double> hidden;
    std::vector<double> log_probs;
};

double LanguageModel::sequence_nll(const TrainSequence& seq) const {
    std::vector<TokenId> history = seq.history;
    double nll = 0.0;
    for (TokenId target : seq.target) {
        const std::vector<double> lp = next_log_probs(seq.source, history);
        nll -= lp.at(static_cast<std::size_t>(target));
        history.push_back(target);
    }
    return nll;
}

TinyMlpLm::TinyMlpLm(const TinyLmShape& shape, std::uint64_t seed) : shape_(shape) {
    if (shape_.vocab_size <= static_cast<std::size_t>(Vocabulary::kNumSpecial) ||
        shape_.embedding_dim == 0 || shape_.hidden_dim == 0) {
        throw Error(ErrorCode::kInvalidArgument, "tiny-mlp shape must have words and nonzero dims");
    }
    allocate();

    Rng rng(mix_seed(seed, 0x71e7));
    const std::size_t d = shape_.embedding_dim;
    const std::size_t h = shape_.hidden_dim;
    const std::size_t v = shape_.vocab_size;
    auto fill = [&](std::size_t offset, std::size_t count, double scale) {
        for (std::size_t i = 0; i < count; ++i) params_[offset + i] = scale * rng.normal();
    };
    fill(off_token_emb_, v * d, 0.1);
    fill(off_source_emb_, v * d, 0.1);
    fill(off_pos_emb_, kPositionBuckets * d, 0.1);
    fill(off_w_, h * input_dim_, 1.0 / std::sqrt(static_cast<double>(input_dim_)));
    fill(off_out_, v * h, 1.0 / std::sqrt(static_cast<double>(h)));
}

void TinyMlpLm::allocate() {
    const std::size_t d = shape_.embedding_dim;
    const std::size_t h = shape_.hidden_dim;
    const std::size_t v = shape_.vocab_size;
    input_dim_ = kBlocks * d;
    std::size_t offset = 0;
    auto take = [&](std::size_t count) {
        const std::size_t start = offset;
        offset += count;
        return start;
    };
    off_token_emb_ = take(v * d);
    off_source_emb_ = take(v * d);
    off_pos_emb_ = take(kPositionBuckets * d);
    off_w_ = take(h * input_dim_);
    off_bh_ = take(h);
    off_out_ = take(v * h);
    off_bo_ = take(v);
    params_.assign(offset, 0.0);
    grads_.assign(offset, 0.0);
    adam_m_.assign(offset, 0.0);
    adam_v_.assign(offset, 0.0);
    adam_steps_ = 0;
}

TinyMlpLm::Features TinyMlpLm::features_at(std::span<const TokenId> history) const {
    Features f;
    const std::size_t n = history.size();
    for (std::size_t k = 0; k < kWindow; ++k) {
        f.previous[k] = k < n ? history[n - 1 - k] : Vocabulary::kPad;
    }
    f.segment = Vocabulary::kPad;
    f.position = n;
    for (std::size_t i = n; i-- > 0;) {
        const TokenId t = history[i];
        if (Vocabulary::is_special(t) && t != Vocabulary::kPad && t != Vocabulary::kUnk) {
            f.segment = t;
            f.position = n - 1 - i;
            break;
        }
    }
    f.position = std::min(f.position, kPositionBuckets - 1);
    for (TokenId& t : f.previous) {
        if (t < 0 || static_cast<std::size_t>(t) >= shape_.vocab_size) t = Vocabulary::kUnk;
    }
    return f;
}

void TinyMlpLm::source_mean(std::span<const TokenId> source, std::vector<double>& out) const {
    const std::size_t d = shape_.embedding_dim;
    out.assign(d, 0.0);
    if (source.empty()) return;
    for (TokenId t : source) {
        const auto id = static_cast<std::size_t>(
            (t < 0 || static_cast<std::size_t>(t) >= shape_.vocab_size) ? Vocabulary::kUnk : t);
        const double* row = &params_[off_source_emb_ + id * d];
        for (std::size_t j = 0; j < d; ++j) out[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(source.size());
    for (double& x : out) x *= inv;
}

void TinyMlpLm::forward(const Features& f, const std::vector<double>& src_mean,
                        Activations& act) const {
    const std::size_t d = shape_.embedding_dim;
    const std::size_t h = shape_.hidden_dim;
    const std::size_t v = shape_.vocab_size;

    act.input.resize(input_dim_);
    auto copy_row = [&](std::size_t block, const double* row) {
        std::memcpy(&act.input[block * d], row, d * sizeof(double));
    };
    for (std::size_t k = 0; k < kWindow; ++k) {
        copy_row(k, &params_[off_token_emb_ + static_cast<std::size_t>(f.previous[k]) * d]);
    }
    copy_row(kWindow, &params_[off_token_emb_ + static_cast<std::size_t>(f.segment) * d]);
    copy_row(kWindow + 1, &params_[off_pos_emb_ + f.position * d]);
    copy_row(kWindow + 2, src_mean.data());

    act.hidden.resize(h);
    for (std::size_t r = 0; r < h; ++r) {
        const double* w = &params_[off_w_ + r * input_dim_];
        double z = params_[off_bh_ + r];
        for (std::size_t i = 0; i < input_dim_; ++i) z += w[i] * act.input[i];
        act.hidden[r] = std::tanh(z);
    }

    act.log_probs.resize(v);
    for (std::size_t o = 0; o < v; ++o) {
        const double* w = &params_[off_out_ + o * h];
        double z = params_[off_bo_ + o];
        for (std::size_t r = 0; r < h; ++r) z += w[r] * act.hidden[r];
        act.log_probs[o] = z;
    }
    log_softmax_inplace(act.log_probs);
}

std::vector<double> TinyMlpLm::next_log_probs(std::span<const TokenId> source,
                                              std::span<const TokenId> history) const {
    std::vector<double> src;
    source_mean(source, src);
    Activations act;
    forward(features_at(history), src, act);
    return std::move(act.log_probs);
}

double TinyMlpLm::sequence_nll(const TrainSequence& seq) const {
    return accumulate_sequence(seq, 0.0, nullptr);
}

double TinyMlpLm::accumulate_sequence(const TrainSequence& seq, double scale,
                                     std::vector<double>* grads) const {
    const bool with_grad = grads != nullptr;
    const std::size_t d = shape_.embedding_dim;
    const std::size_t h = shape_.hidden_dim;
    const std::size_t v = shape_.vocab_size;

    std::vector<double> src;
    source_mean(seq.source, src);
    std::vector<double> d_src(d, 0.0);
    std::vector<TokenId> history = seq.history;
    Activations act;
    std::vector<double> d_logits(v), d_hidden(h), d_input(input_dim_);
    double nll = 0.0;

    for (TokenId target : seq.target) {
        if (target < 0 || static_cast<std::size_t>(target) >= v) {
            throw Error(ErrorCode::kInvalidArgument, "target token out of range");
        }
        const Features f = features_at(history);
        forward(f, src, act);
        nll -= act.log_probs[static_cast<std::size_t>(target)];
        history.push_back(target);
        if (!with_grad) continue;

        for (std::size_t o = 0; o < v; ++o) d_logits[o] = std::exp(act.log_probs[o]) * scale;
        d_logits[static_cast<std::size_t>(target)] -= scale;

        std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
        for (std::size_t o = 0; o < v; ++o) {
            const double g = d_logits[o];
            (*grads)[off_bo_ + o] += g;
            double* gw = &(*grads)[off_out_ + o * h];
            const double* w = &params_[off_out_ + o * h];
            for (std::size_t r = 0; r < h; ++r) {
                gw[r] += g * act.hidden[r];
                d_hidden[r] += g * w[r];
            }
        }
        std::fill(d_input.begin(), d_input.end(), 0.0);
        for (std::size_t r = 0; r < h; ++r) {
            const double dz = d_hidden[r] * (1.0 - act.hidden[r] * act.hidden[r]);
            (*grads)[off_bh_ + r] += dz;
            double* gw = &(*grads)[off_w_ + r * input_dim_];
            const double* w = &params_[off_w_ + r * input_dim_];
            for (std::size_t i = 0; i < input_dim_; ++i) {
                gw[i] += dz * act.input[i];
                d_input[i] += dz * w[i];
            }
        }
        auto scatter = [&](std::size_t block, std::size_t param_offset) {
            double* g = &(*grads)[param_offset];
            for (std::size_t j = 0; j < d; ++j) g[j] += d_input[block * d + j];
        };
        for (std::size_t k = 0; k < kWindow; ++k) {
            scatter(k, off_token_emb_ + static_cast<std::size_t>(f.previous[k]) * d);
        }
        scatter(kWindow, off_token_emb_ + static_cast<std::size_t>(f.segment) * d);
        scatter(kWindow + 1, off_pos_emb_ + f.position * d);
        for (std::size_t j = 0; j < d; ++j) d_src[j] += d_input[(kWindow + 2) * d + j];
    }

    if (with_grad && !seq.source.empty()) {
        const double inv = 1.0 / static_cast<double>(seq.source.size());
        for (TokenId t : seq.source) {
            const auto id = static_cast<std::size_t>(
                (t < 0 || static_cast<std::size_t>(t) >= v) ? Vocabulary::kUnk : t);
            double* g = &(*grads)[off_source_emb_ + id * d];
            for (std::size_t j = 0; j < d; ++j) g[j] += d_src[j] * inv;
        }
    }
    return nll;
}

double TinyMlpLm::train_step(std::span<const TrainExample> batch, double normalizer,
                             const AdamConfig& adam) {
    if (!(normalizer > 0.0)) throw Error(ErrorCode::kInvalidArgument, "normalizer must be positive");
    std::fill(grads_.begin(), grads_.end(), 0.0);
    const double scale = 1.0 / normalizer;
    double total = 0.0;
    for (const TrainExample& example : batch) {
        for (const TrainSequence& seq : example) total += accumulate_sequence(seq, scale, &grads_);
    }
    const double loss = total / normalizer;
    if (!std::isfinite(loss)) return loss;

    double norm_sq = 0.0;
    for (double g : grads_) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    const double clip = norm > kMaxGradNorm ? kMaxGradNorm / norm : 1.0;

    ++adam_steps_;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam_steps_));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam_steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double g = grads_[i] * clip;
        adam_m_[i] = adam.beta1 * adam_m_[i] + (1.0 - adam.beta1) * g;
        adam_v_[i] = adam.beta2 * adam_v_[i] + (1.0 - adam.beta2) * g * g;
        const double m_hat = adam_m_[i] / bc1;
        const double v_hat = adam_v_[i] / bc2;
        params_[i] -= adam.learning_rate * m_hat / (std::sqrt(v_hat) + adam.epsilon);
    }
    return loss;
}

void TinyMlpLm::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"backend", backend_id()},
                           {"vocab_size", shape_.vocab_size},
                           {"embedding_dim", shape_.embedding_dim},
                           {"hidden_dim", shape_.hidden_dim},
                           {"window", kWindow},
                           {"position_buckets", kPositionBuckets},
                           {"parameter_count", params_.size()}};
    {
        std::ofstream out(dir / "backend.json");
        if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "backend.json").string());
        out << meta.dump(2) << '\n';
    }
    std::ofstream out(dir / "weights.bin", std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "weights.bin").string());
    const auto count = static_cast<std::uint64_t>(params_.size());
    out.write(kWeightsMagic, sizeof kWeightsMagic);
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(params_.data()),
              static_cast<std::streamsize>(params_.size() * sizeof(double)));
    if (!out) throw Error(ErrorCode::kIo, "write failed for weights.bin");
}

std::unique_ptr<TinyMlpLm> TinyMlpLm::load(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "backend.json");
    if (!meta_in) throw Error(ErrorCode::kIo, "cannot open " + (dir / "backend.json").string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kIo, std::string("backend.json: ") + e.what());
    }
    TinyLmShape shape;
    shape.vocab_size = meta.at("vocab_size").get<std::size_t>();
    shape.embedding_dim = meta.at("embedding_dim").get<std::size_t>();
    shape.hidden_dim = meta.at("hidden_dim").get<std::size_t>();
    auto model = std::make_unique<TinyMlpLm>(shape, 0);

    std::ifstream in(dir / "weights.bin", std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + (dir / "weights.bin").string());
    char magic[sizeof kWeightsMagic];
    std::uint64_t count = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!in || std::memcmp(magic, kWeightsMagic, sizeof magic) != 0 ||
        count != model->params_.size()) {
        throw Error(ErrorCode::kIo, "weights.bin does not match backend.json");
    }
    in.read(reinterpret_cast<char*>(model->params_.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw Error(ErrorCode::kIo, "truncated weights.bin");
    return model;
}

std::unique_ptr<LanguageModel> make_language_model(const std::string& backend_id,
                                                   const TinyLmShape& shape, std::uint64_t seed) {
    if (backend_id == "tiny-mlp") return std::make_unique<TinyMlpLm>(shape, seed);
    throw Error(ErrorCode::kBackendUnavailable, "no backend named '" + backend_id + "'");
}

std::unique_ptr<LanguageModel> load_language_model(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "backend.json");
    if (!meta_in) throw Error(ErrorCode::kIo, "cannot open " + (dir / "backend.json").string());
    std::string backend;
    try {
        backend = nlohmann::json::parse(meta_in).at("backend").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kIo, std::string("backend.json: ") + e.what());
    }
    if (backend == "tiny-mlp") return TinyMlpLm::load(dir);
    throw Error(ErrorCode::kBackendUnavailable, "no backend named '" + backend + "'");
}

}  // namespace persp
