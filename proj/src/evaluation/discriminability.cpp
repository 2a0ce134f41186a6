#include "persp/discriminability.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

bool is_word_char(char c) noexcept {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::vector<std::string> word_tokens(std::string_view doc) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < doc.size()) {
        while (i < doc.size() && !is_word_char(doc[i])) ++i;
        std::size_t start = i;
        while (i < doc.size() && is_word_char(doc[i])) ++i;
        if (i - start >= 2) {
            std::string w(doc.substr(start, i - start));
            for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            out.push_back(std::move(w));
        }
    }
    return out;
}

double sparse_dot(const SparseRow& a, const SparseRow& b) {
    double dot = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (ia->first < ib->first) ++ia;
        else if (ib->first < ia->first) ++ib;
        else {
            dot += ia->second * ib->second;
            ++ia;
            ++ib;
        }
    }
    return dot;
}

// Row-wise conditional probabilities matching the target perplexity by
// bisection on the precision beta.
std::vector<double> conditional_p(const std::vector<double>& d2, std::size_t n, double perplexity) {
    std::vector<double> p(n * n, 0.0);
    const double desired_entropy = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0;
        double beta_min = -std::numeric_limits<double>::infinity();
        double beta_max = std::numeric_limits<double>::infinity();
        double* row = &p[i * n];
        const double* drow = &d2[i * n];
        for (int step = 0; step < 100; ++step) {
            double sum_p = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-drow[j] * beta);
                sum_p += row[j];
            }
            if (sum_p == 0.0) sum_p = kEps;
            double sum_dp = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] /= sum_p;
                sum_dp += drow[j] * row[j];
            }
            const double entropy = std::log(sum_p) + beta * sum_dp;
            const double diff = entropy - desired_entropy;
            if (std::abs(diff) <= 1e-5) break;
            if (diff > 0.0) {
                beta_min = beta;
                beta = std::isinf(beta_max) ? beta * 2.0 : (beta + beta_max) / 2.0;
            } else {
                beta_max = beta;
                beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
            }
        }
    }
    return p;
}

double rbf(const std::array<double, 2>& a, const std::array<double, 2>& b, double gamma) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return std::exp(-gamma * (dx * dx + dy * dy));
}

}  // namespace

TfidfMatrix tfidf_vectorize(std::span<const std::string> documents) {
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(documents.size());
    std::map<std::string, std::size_t> df;
    for (const std::string& doc : documents) {
        tokens.push_back(word_tokens(doc));
        std::vector<std::string> uniq = tokens.back();
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (const std::string& t : uniq) ++df[t];
    }
    if (df.empty()) {
        throw Error(ErrorCode::kDegenerateVocabulary, "no document contains a term");
    }

    TfidfMatrix m;
    std::map<std::string, std::size_t> index;
    const double n = static_cast<double>(documents.size());
    for (const auto& [term, count] : df) {
        index.emplace(term, m.terms.size());
        m.terms.push_back(term);
        m.idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
    m.rows.reserve(tokens.size());
    for (const auto& doc : tokens) {
        std::map<std::size_t, double> tf;
        for (const std::string& t : doc) tf[index.at(t)] += 1.0;
        SparseRow row;
        double norm = 0.0;
        for (const auto& [col, count] : tf) {
            const double w = count * m.idf[col];
            row.emplace_back(col, w);
            norm += w * w;
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (auto& entry : row) entry.second /= norm;
        }
        m.rows.push_back(std::move(row));
    }
    return m;
}

std::vector<std::array<double, 2>> tsne_2d(const TfidfMatrix& x, const TsneConfig& cfg) {
    const std::size_t n = x.rows.size();
    if (n < 2) throw Error(ErrorCode::kTooFewPoints, "t-SNE needs at least 2 points");
    if (cfg.perplexity <= 0.0 || cfg.iterations < 1 || cfg.exaggeration_iterations < 0) {
        throw Error(ErrorCode::kInvalidArgument, "bad t-SNE configuration");
    }
    const double perplexity =
        std::max(1.0, std::min(cfg.perplexity, static_cast<double>(n - 1) / 3.0));

    std::vector<double> sq_norm(n);
    for (std::size_t i = 0; i < n; ++i) sq_norm[i] = sparse_dot(x.rows[i], x.rows[i]);
    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::max(0.0, sq_norm[i] + sq_norm[j] - 2.0 * sparse_dot(x.rows[i], x.rows[j]));
            d2[i * n + j] = d;
            d2[j * n + i] = d;
        }
    }

    std::vector<double> p = conditional_p(d2, n, perplexity);
    d2.clear();
    d2.shrink_to_fit();
    double sum_p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = p[i * n + j] + p[j * n + i];
            p[i * n + j] = s;
            p[j * n + i] = s;
            sum_p += 2.0 * s;
        }
        p[i * n + i] = 0.0;
    }
    sum_p = std::max(sum_p, kEps);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) p[i * n + j] = std::max(p[i * n + j] / sum_p, kEps);
        }
    }

    Rng rng(cfg.seed);
    std::vector<double> y(2 * n);
    for (double& v : y) v = 1e-4 * rng.normal();
    std::vector<double> update(2 * n, 0.0);
    std::vector<double> gains(2 * n, 1.0);
    std::vector<double> grad(2 * n);
    std::vector<double> num(n * n);
    const double learning_rate = std::max(static_cast<double>(n) / cfg.early_exaggeration / 4.0, 50.0);

    for (int it = 0; it < cfg.iterations; ++it) {
        const bool exaggerating = it < cfg.exaggeration_iterations;
        const double exaggeration = exaggerating ? cfg.early_exaggeration : 1.0;
        const double momentum = exaggerating ? 0.5 : 0.8;

        double sum_num = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[2 * i] - y[2 * j];
                const double dy = y[2 * i + 1] - y[2 * j + 1];
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                sum_num += 2.0 * v;
            }
        }
        double grad_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double v = num[i * n + j];
                const double q = std::max(v / sum_num, kEps);
                const double mult = (exaggeration * p[i * n + j] - q) * v;
                gx += mult * (y[2 * i] - y[2 * j]);
                gy += mult * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
            grad_norm += 16.0 * (gx * gx + gy * gy);
        }
        if (std::sqrt(grad_norm) < 1e-7) {
            if (exaggerating) {
                it = cfg.exaggeration_iterations - 1;
                continue;
            }
            break;
        }
        for (std::size_t k = 0; k < 2 * n; ++k) {
            if (update[k] * grad[k] < 0.0) gains[k] += 0.2;
            else gains[k] *= 0.8;
            gains[k] = std::max(gains[k], 0.01);
            update[k] = momentum * update[k] - learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
    }

    std::vector<std::array<double, 2>> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = {y[2 * i], y[2 * i + 1]};
    return out;
}

void RbfSvc::fit(std::span<const std::array<double, 2>> x, std::span<const int> labels,
                 const SvcConfig& cfg) {
    const std::size_t n = x.size();
    if (n != labels.size()) throw Error(ErrorCode::kLengthMismatch, "points and labels differ in length");
    if (n < 2) throw Error(ErrorCode::kTooFewPoints, "SVC needs at least 2 points");
    if (cfg.c <= 0.0 || cfg.tolerance <= 0.0) throw Error(ErrorCode::kInvalidArgument, "bad SVC configuration");
    std::vector<double> yv(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
        yv[i] = labels[i] == 1 ? 1.0 : -1.0;
        (labels[i] == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw Error(ErrorCode::kPrecondition, "SVC needs both classes");

    gamma_ = cfg.gamma;
    if (gamma_ <= 0.0) {
        double mean = 0.0;
        for (const auto& p : x) mean += p[0] + p[1];
        mean /= static_cast<double>(2 * n);
        double var = 0.0;
        for (const auto& p : x) var += (p[0] - mean) * (p[0] - mean) + (p[1] - mean) * (p[1] - mean);
        var /= static_cast<double>(2 * n);
        gamma_ = var > 0.0 ? 1.0 / (2.0 * var) : 1.0;
    }

    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = rbf(x[i], x[j], gamma_);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }

    // SMO with second-order working-set selection on the dual
    //   min 1/2 a'Qa - e'a,  0 <= a <= C,  y'a = 0,  Q_ij = y_i y_j K_ij.
    const double c = cfg.c;
    constexpr double kTau = 1e-12;
    std::vector<double> alpha(n, 0.0);
    std::vector<double> g(n, -1.0);
    auto upper = [&](std::size_t t) { return alpha[t] >= c; };
    auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (yv[t] > 0) {
                if (!upper(t) && -g[t] >= gmax) { gmax = -g[t]; i = t; }
            } else if (!lower(t) && g[t] >= gmax) {
                gmax = g[t];
                i = t;
            }
        }
        if (i == n) break;
        double gmax2 = -std::numeric_limits<double>::infinity();
        double obj_min = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            double grad_diff = 0.0;
            if (yv[t] > 0) {
                if (lower(t)) continue;
                grad_diff = gmax + g[t];
                gmax2 = std::max(gmax2, g[t]);
            } else {
                if (upper(t)) continue;
                grad_diff = gmax - g[t];
                gmax2 = std::max(gmax2, -g[t]);
            }
            if (grad_diff > 0.0) {
                double quad = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                if (quad <= 0.0) quad = kTau;
                const double obj = -(grad_diff * grad_diff) / quad;
                if (obj <= obj_min) { obj_min = obj; j = t; }
            }
        }
        if (gmax + gmax2 < cfg.tolerance || j == n) break;

        const double old_i = alpha[i];
        const double old_j = alpha[j];
        const double qij = yv[i] * yv[j] * k[i * n + j];
        if (yv[i] != yv[j]) {
            double quad = k[i * n + i] + k[j * n + j] + 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-g[i] - g[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = k[i * n + i] + k[j * n + j] - 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (g[i] - g[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > c) {
                if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double di = alpha[i] - old_i;
        const double dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) {
            g[t] += yv[t] * (yv[i] * k[i * n + t] * di + yv[j] * k[j * n + t] * dj);
        }
    }

    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = yv[t] * g[t];
        if (upper(t)) {
            if (yv[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (yv[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    bias_ = -rho;

    support_.clear();
    coef_.clear();
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            support_.push_back(x[t]);
            coef_.push_back(alpha[t] * yv[t]);
        }
    }
}

double RbfSvc::decision(const std::array<double, 2>& point) const {
    double s = bias_;
    for (std::size_t i = 0; i < support_.size(); ++i) s += coef_[i] * rbf(support_[i], point, gamma_);
    return s;
}

std::size_t DiscriminabilityReport::eval_size() const noexcept {
    return confusion[0][0] + confusion[0][1] + confusion[1][0] + confusion[1][1];
}

DiscriminabilityReport discriminability(std::span<const std::string> generated,
                                        std::span<const std::string> held_out, std::uint64_t seed) {
    if (generated.size() < 2 || held_out.size() < 2) {
        throw Error(ErrorCode::kPrecondition, "each class needs at least 2 texts");
    }
    std::vector<std::string> docs(generated.begin(), generated.end());
    docs.insert(docs.end(), held_out.begin(), held_out.end());
    if (std::all_of(docs.begin(), docs.end(), [&](const std::string& d) { return d == docs.front(); })) {
        throw Error(ErrorCode::kDegenerateVocabulary, "all documents are identical");
    }
    const TfidfMatrix tfidf = tfidf_vectorize(docs);

    TsneConfig tsne;
    tsne.seed = mix_seed(seed, 0x7153);
    const auto points = tsne_2d(tfidf, tsne);

    std::vector<int> labels(docs.size(), 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(generated.size()), 1);

    // Stratified 80/20: each class contributes round(20%) (at least one).
    std::vector<bool> is_eval(docs.size(), false);
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            if (labels[i] == cls) idx.push_back(i);
        }
        Rng rng(mix_seed(seed, 0x5911 + static_cast<std::uint64_t>(cls)));
        rng.shuffle(idx);
        const auto n_eval = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(idx.size()))));
        for (std::size_t k = 0; k < n_eval; ++k) is_eval[idx[k]] = true;
    }

    std::vector<std::array<double, 2>> train_x;
    std::vector<int> train_y;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (!is_eval[i]) {
            train_x.push_back(points[i]);
            train_y.push_back(labels[i]);
        }
    }
    RbfSvc svc;
    svc.fit(train_x, train_y);

    DiscriminabilityReport report;
    report.embedding.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        report.embedding.push_back({points[i][0], points[i][1], labels[i], is_eval[i]});
        if (is_eval[i]) ++report.confusion[labels[i]][svc.predict(points[i])];
    }
    const double tp = static_cast<double>(report.confusion[1][1]);
    const double fp = static_cast<double>(report.confusion[0][1]);
    const double fn = static_cast<double>(report.confusion[1][0]);
    const double tn = static_cast<double>(report.confusion[0][0]);
    report.accuracy = (tp + tn) / static_cast<double>(report.eval_size());
    report.f1 = tp > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    return report;
}

}  // namespace persp
