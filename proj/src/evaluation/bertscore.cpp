#include "persp/bertscore.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kPretrained = {
    "distilbert-base-uncased", "roberta-base", "microsoft/deberta-xlarge-mnli"};

std::vector<std::string> whitespace_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

double mean(std::span<const double> values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

std::vector<TokenEmbeddings> TokenEncoder::encode_batch(std::span<const std::string> texts) const {
    std::vector<TokenEmbeddings> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(encode(t));
    return out;
}

LookupEncoder::LookupEncoder(std::string id,
                             std::unordered_map<std::string, std::vector<double>> table)
    : id_(std::move(id)), table_(std::move(table)) {}

TokenEmbeddings LookupEncoder::encode(std::string_view text) const {
    TokenEmbeddings out;
    for (const std::string& word : whitespace_words(text)) {
        auto it = table_.find(word);
        if (it == table_.end()) {
            throw Error(ErrorCode::kEncoderFailure, id_ + ": no embedding for '" + word + "'");
        }
        out.push_back(it->second);
    }
    return out;
}

HashingEncoder::HashingEncoder(std::size_t dim, double neighbour_weight)
    : dim_(dim), neighbour_weight_(neighbour_weight) {
    if (dim_ == 0) throw Error(ErrorCode::kInvalidArgument, "encoder dimension must be positive");
}

std::vector<double> HashingEncoder::word_vector(std::string_view word) const {
    std::string lowered(word);
    for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    Rng rng(fnv1a(lowered));
    std::vector<double> v(dim_);
    for (double& x : v) x = std::abs(rng.normal());
    return v;
}

TokenEmbeddings HashingEncoder::encode(std::string_view text) const {
    const std::vector<std::string> words = whitespace_words(text);
    std::vector<std::vector<double>> base;
    base.reserve(words.size());
    for (const std::string& w : words) base.push_back(word_vector(w));
    TokenEmbeddings out(words.size(), std::vector<double>(dim_, 0.0));
    for (std::size_t i = 0; i < words.size(); ++i) {
        for (std::size_t j = 0; j < dim_; ++j) {
            double x = base[i][j];
            if (i > 0) x += neighbour_weight_ * base[i - 1][j];
            if (i + 1 < words.size()) x += neighbour_weight_ * base[i + 1][j];
            out[i][j] = x;
        }
    }
    return out;
}

SubprocessEncoder::SubprocessEncoder(std::string id, std::string command)
    : id_(std::move(id)), command_(std::move(command)) {}

TokenEmbeddings SubprocessEncoder::encode(std::string_view text) const {
    const std::string one(text);
    return encode_batch(std::span<const std::string>(&one, 1)).front();
}

std::vector<TokenEmbeddings> SubprocessEncoder::encode_batch(std::span<const std::string> texts) const {
    static std::atomic<std::uint64_t> counter{0};
    const auto request_path = std::filesystem::temp_directory_path() /
                              ("persp-encode-" + std::to_string(::getpid()) + "-" +
                               std::to_string(counter.fetch_add(1)) + ".json");
    {
        std::ofstream out(request_path);
        if (!out) throw Error(ErrorCode::kEncoderFailure, "cannot write encoder request");
        out << json{{"model", id_}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();
    }
    const std::string command = "(" + command_ + ") < '" + request_path.string() + "'";
    std::string response;
    FILE* pipe = ::popen(command.c_str(), "r");
    if (pipe == nullptr) {
        std::filesystem::remove(request_path);
        throw Error(ErrorCode::kEncoderFailure, id_ + ": cannot start '" + command_ + "'");
    }
    std::array<char, 65536> buffer{};
    std::size_t n = 0;
    while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0) response.append(buffer.data(), n);
    const int status = ::pclose(pipe);
    std::filesystem::remove(request_path);
    if (status != 0) {
        throw Error(ErrorCode::kEncoderFailure,
                    id_ + ": encoder command exited with status " + std::to_string(status));
    }
    std::vector<TokenEmbeddings> out;
    try {
        out = json::parse(response).at("embeddings").get<std::vector<TokenEmbeddings>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kEncoderFailure, id_ + ": bad encoder response: " + e.what());
    }
    if (out.size() != texts.size()) {
        throw Error(ErrorCode::kEncoderFailure, id_ + ": response has wrong number of texts");
    }
    return out;
}

std::span<const std::string_view> pretrained_encoder_ids() noexcept { return kPretrained; }

std::unique_ptr<TokenEncoder> make_encoder(std::string_view id) {
    if (id == "toy-hash") return std::make_unique<HashingEncoder>();
    if (std::find(kPretrained.begin(), kPretrained.end(), id) != kPretrained.end()) {
        const char* env = std::getenv("PERSP_ENCODER_CMD");
        std::string command = env != nullptr && *env != '\0' ? env : "python3 tools/hf_encoder.py";
        return std::make_unique<SubprocessEncoder>(std::string(id), std::move(command));
    }
    throw Error(ErrorCode::kEncoderFailure, "unknown encoder '" + std::string(id) + "'");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::kEncoderFailure, "embedding dimensions differ");
    }
    // Identical vectors score exactly 1 rather than 1 - ulp.
    if (std::equal(a.begin(), a.end(), b.begin())) {
        return std::any_of(a.begin(), a.end(), [](double x) { return x != 0.0; }) ? 1.0 : 0.0;
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

PairScore greedy_match(const TokenEmbeddings& candidate, const TokenEmbeddings& reference) {
    if (candidate.empty() || reference.empty()) {
        throw Error(ErrorCode::kEmptyText, "cannot score an empty token sequence");
    }
    std::vector<double> best_for_ref(reference.size(), -1.0);
    double precision_sum = 0.0;
    for (const auto& c : candidate) {
        double best = -1.0;
        for (std::size_t j = 0; j < reference.size(); ++j) {
            const double s = cosine_similarity(c, reference[j]);
            best = std::max(best, s);
            best_for_ref[j] = std::max(best_for_ref[j], s);
        }
        precision_sum += best;
    }
    double recall_sum = 0.0;
    for (double s : best_for_ref) recall_sum += s;
    PairScore score;
    score.precision = precision_sum / static_cast<double>(candidate.size());
    score.recall = recall_sum / static_cast<double>(reference.size());
    score.f1 = harmonic(score.precision, score.recall);
    return score;
}

BertScoreResult bert_score(std::span<const std::string> candidates,
                           std::span<const std::string> references, const TokenEncoder& encoder) {
    if (candidates.size() != references.size()) {
        throw Error(ErrorCode::kLengthMismatch, std::to_string(candidates.size()) + " candidates vs " +
                                                    std::to_string(references.size()) + " references");
    }
    if (candidates.empty()) throw Error(ErrorCode::kPrecondition, "no pairs to score");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (trim(candidates[i]).empty() || trim(references[i]).empty()) {
            throw Error(ErrorCode::kEmptyText, "pair " + std::to_string(i));
        }
    }
    const std::vector<TokenEmbeddings> cand = encoder.encode_batch(candidates);
    const std::vector<TokenEmbeddings> ref = encoder.encode_batch(references);
    if (cand.size() != candidates.size() || ref.size() != references.size()) {
        throw Error(ErrorCode::kEncoderFailure, encoder.id() + ": wrong batch size");
    }

    BertScoreResult result;
    result.pairs.reserve(candidates.size());
    std::vector<double> p, r, f;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (cand[i].empty() || ref[i].empty()) {
            throw Error(ErrorCode::kEmptyText, "pair " + std::to_string(i) + " encodes to no tokens");
        }
        const PairScore s = greedy_match(cand[i], ref[i]);
        result.pairs.push_back(s);
        p.push_back(s.precision);
        r.push_back(s.recall);
        f.push_back(s.f1);
    }
    result.mean_precision = mean(p);
    result.mean_recall = mean(r);
    result.mean_f1 = mean(f);
    return result;
}

std::string_view to_string(Slice slice) noexcept {
    switch (slice) {
        case Slice::kQ: return "Q";
        case Slice::kABC: return "A+B+C";
        case Slice::kQABC: return "Q+A+B+C";
    }
    return "?";
}

std::string slice_text(std::string_view question, std::string_view a, std::string_view b,
                       std::string_view c, Slice slice) {
    std::string out;
    auto add = [&](std::string_view part) {
        if (!out.empty()) out += ' ';
        out += part;
    };
    if (slice != Slice::kABC) add(question);
    if (slice != Slice::kQ) {
        add(a);
        add(b);
        add(c);
    }
    return out;
}

std::vector<ScoreReport> slice_eval(const Corpus& test, std::span<const CandidateTriple> generated,
                                    std::span<const TokenEncoder* const> encoders) {
    if (test.size() != generated.size()) {
        throw Error(ErrorCode::kLengthMismatch, std::to_string(generated.size()) +
                                                    " candidates for " + std::to_string(test.size()) +
                                                    " test records");
    }
    if (encoders.empty()) throw Error(ErrorCode::kPrecondition, "no encoders given");
    for (std::size_t i = 0; i < generated.size(); ++i) {
        if (trim(generated[i].context) != trim(test.points[i].context)) {
            throw Error(ErrorCode::kPrecondition,
                        "candidate " + std::to_string(i) + " was not generated from test context " +
                            std::to_string(i));
        }
    }

    std::vector<ScoreReport> reports;
    for (const TokenEncoder* encoder : encoders) {
        for (Slice slice : kAllSlices) {
            std::vector<std::string> cand, ref;
            for (std::size_t i = 0; i < generated.size(); ++i) {
                const CandidateTriple& g = generated[i];
                const DataPoint& t = test.points[i];
                cand.push_back(slice_text(g.question, g.option_a, g.option_b, g.option_c, slice));
                ref.push_back(slice_text(t.question, t.option_a, t.option_b, t.option_c, slice));
            }
            const BertScoreResult r = bert_score(cand, ref, *encoder);
            reports.push_back({encoder->id(), slice, r.mean_precision, r.mean_recall,
                               harmonic(r.mean_precision, r.mean_recall), generated.size()});
        }
    }
    return reports;
}

}  // namespace persp
