#include "persp/surveystats.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "persp/errors.hpp"

namespace persp {
namespace {

const std::vector<SurveyItem>& nasa_items() {
    static const std::vector<SurveyItem> items = {
        {"MD", "", "mental demand"}, {"PD", "", "physical demand"}, {"TD", "", "temporal demand"},
        {"Perf", "", "performance"}, {"Eff", "", "effort"},         {"Frus", "", "frustration"}};
    return items;
}

const std::vector<SurveyItem>& godspeed_items() {
    static const std::vector<SurveyItem> items = {
        {"PS1", "PS", "anxious to relaxed"},
        {"PS2", "PS", "agitated to calm"},
        {"PS3", "PS", "quiescent to surprised"},
        {"AP1", "AP", "fake to natural"},
        {"AP2", "AP", "machinelike to humanlike"},
        {"AP3", "AP", "unconscious to conscious"},
        {"AP4", "AP", "artificial to lifelike"},
        {"AP5", "AP", "moving rigidly to moving elegantly"},
        {"AN1", "AN", "dead to alive"},
        {"AN2", "AN", "stagnant to lively"},
        {"AN3", "AN", "mechanical to organic"},
        {"AN4", "AN", "artificial to lifelike"},
        {"AN5", "AN", "inert to interactive"},
        {"AN6", "AN", "apathetic to responsive"},
        {"LK1", "LK", "dislike to like"},
        {"LK2", "LK", "unfriendly to friendly"},
        {"LK3", "LK", "unkind to kind"},
        {"LK4", "LK", "unpleasant to pleasant"},
        {"LK5", "LK", "awful to nice"},
        {"PI1", "PI", "incompetent to competent"},
        {"PI2", "PI", "ignorant to knowledgeable"},
        {"PI3", "PI", "irresponsible to responsible"},
        {"PI4", "PI", "unintelligent to intelligent"},
        {"PI5", "PI", "foolish to sensible"},
    };
    return items;
}

const std::vector<SurveyItem>& appropriateness_items() {
    static const std::vector<SurveyItem> items = {
        {"Q1", "", "robot as initiator (content generator)"},
        {"Q2", "", "robot as prompter"},
        {"Q3", "", "robot as reinforcer"},
        {"Q4", "", "appropriateness of the whole session"},
        {"Q5", "", "preference over a teleoperated system"},
        {"Q6", "", "reliability"},
        {"Q7", "", "preference in therapeutic or educational settings"},
        {"Q8", "", "helpfulness of the GUI"},
    };
    return items;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string strip(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool all_equal(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::string stars_for(double p) {
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "ns";
}

}  // namespace

std::string_view to_string(Decision decision) noexcept {
    return decision == Decision::kRejectH0 ? "reject_H0" : "fail_to_reject";
}

std::string_view to_string(PBand band) noexcept {
    switch (band) {
        case PBand::kAbove10: return ">0.10";
        case PBand::k05To10: return "0.05-0.10";
        case PBand::kBelow05: return "<0.05";
        case PBand::kBelow01: return "<0.01";
    }
    return "?";
}

double band_upper_bound(PBand band) noexcept {
    switch (band) {
        case PBand::kAbove10: return 1.0;
        case PBand::k05To10: return 0.10;
        case PBand::kBelow05: return 0.05;
        case PBand::kBelow01: return 0.01;
    }
    return 1.0;
}

double ryan_joiner_critical(std::size_t n, double alpha) {
    if (n < 4) throw Error(ErrorCode::kTooFewPoints, "Ryan-Joiner needs n >= 4");
    const double dn = static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(dn);
    const double r1 = 1.0 / dn;
    const double r2 = r1 * r1;
    if (std::abs(alpha - 0.10) < 1e-12) return 1.0071 - 0.1371 * rs - 0.3682 * r1 + 0.7780 * r2;
    if (std::abs(alpha - 0.05) < 1e-12) return 1.0063 - 0.1288 * rs - 0.6118 * r1 + 1.3505 * r2;
    if (std::abs(alpha - 0.01) < 1e-12) return 0.9963 - 0.0211 * rs - 1.4106 * r1 + 3.1791 * r2;
    throw Error(ErrorCode::kInvalidArgument, "critical values exist for alpha 0.10, 0.05, 0.01 only");
}

TestResult ryan_joiner(std::span<const double> sample, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0,1)");
    const std::size_t n = sample.size();
    if (n < 4) throw Error(ErrorCode::kTooFewPoints, "Ryan-Joiner needs n >= 4, got " + std::to_string(n));
    if (all_equal(sample)) throw Error(ErrorCode::kZeroVariance, "sample is constant");

    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const boost::math::normal_distribution<double> stdnorm;
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = (static_cast<double>(i + 1) - 0.375) / (static_cast<double>(n) + 0.25);
        b[i] = boost::math::quantile(stdnorm, pos);
    }
    const double mx = mean_of(x);
    const double mb = mean_of(b);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (b[i] - mb);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (b[i] - mb) * (b[i] - mb);
    }
    const double r = std::min(1.0, sxy / std::sqrt(sxx * syy));

    TestResult out;
    out.statistic = r;
    out.df = static_cast<double>(n);
    out.alpha = alpha;
    if (r < ryan_joiner_critical(n, 0.01)) out.p_band = PBand::kBelow01;
    else if (r < ryan_joiner_critical(n, 0.05)) out.p_band = PBand::kBelow05;
    else if (r < ryan_joiner_critical(n, 0.10)) out.p_band = PBand::k05To10;
    else out.p_band = PBand::kAbove10;
    out.decision = band_upper_bound(*out.p_band) <= alpha ? Decision::kRejectH0 : Decision::kFailToReject;
    return out;
}

TestResult paired_t_test(std::span<const double> x, std::span<const double> y, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0,1)");
    if (x.size() != y.size()) {
        throw Error(ErrorCode::kLengthMismatch,
                    std::to_string(x.size()) + " vs " + std::to_string(y.size()) + " observations");
    }
    const std::size_t n = x.size();
    if (n < 2) throw Error(ErrorCode::kTooFewPoints, "paired t-test needs n >= 2");
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - y[i];
    if (all_equal(d)) throw Error(ErrorCode::kZeroVariance, "all paired differences are equal");

    const double sd = sample_sd(d);
    const double t = mean_of(d) / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
    const double p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));

    TestResult out;
    out.statistic = t;
    out.df = static_cast<double>(n - 1);
    out.p_value = p;
    out.alpha = alpha;
    out.decision = p < alpha ? Decision::kRejectH0 : Decision::kFailToReject;
    return out;
}

double power_paired_t(std::size_t n, double mean_diff, double sd_diff, double alpha) {
    if (n < 2) throw Error(ErrorCode::kInvalidArgument, "power needs n >= 2");
    if (!(sd_diff > 0.0) || !std::isfinite(sd_diff)) throw Error(ErrorCode::kInvalidArgument, "sd_diff must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0,1)");
    if (!std::isfinite(mean_diff)) throw Error(ErrorCode::kInvalidArgument, "mean_diff must be finite");
    // Under H0 the rejection probability is alpha by construction of t_crit.
    if (mean_diff == 0.0) return alpha;

    const double df = static_cast<double>(n - 1);
    const double delta = std::sqrt(static_cast<double>(n)) * mean_diff / sd_diff;
    const boost::math::students_t_distribution<double> dist(df);
    const double t_crit = boost::math::quantile(dist, 1.0 - alpha / 2.0);

    // T = (Z + delta) / (W / sqrt(df)) with W ~ chi(df). Condition on W:
    // P(|T| > c | W=w) = Phi(delta - c w / sqrt(df)) + Phi(-delta - c w / sqrt(df)).
    const double log_norm = (df / 2.0 - 1.0) * std::log(2.0) + boost::math::lgamma(df / 2.0);
    auto integrand = [&](double w) {
        if (w <= 0.0) return 0.0;
        const double density = std::exp((df - 1.0) * std::log(w) - 0.5 * w * w - log_norm);
        const double s = t_crit * w / std::sqrt(df);
        return density * (normal_cdf(delta - s) + normal_cdf(-delta - s));
    };
    double error = 0.0;
    const double power = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, 0.0, std::numeric_limits<double>::infinity(), 20, 1e-12, &error);
    return std::clamp(power, 0.0, 1.0);
}

Instrument parse_instrument(std::string_view name) {
    const std::string s = lower(strip(name));
    if (s == "nasa_tlx" || s == "nasa-tlx" || s == "nasatlx") return Instrument::kNasaTlx;
    if (s == "godspeed") return Instrument::kGodspeed;
    if (s == "appropriateness") return Instrument::kAppropriateness;
    throw Error(ErrorCode::kInvalidArgument, "unknown instrument '" + std::string(name) + "'");
}

std::string_view to_string(Instrument instrument) noexcept {
    switch (instrument) {
        case Instrument::kNasaTlx: return "nasa_tlx";
        case Instrument::kGodspeed: return "godspeed";
        case Instrument::kAppropriateness: return "appropriateness";
    }
    return "?";
}

Condition parse_condition(std::string_view name) {
    const std::string s = lower(strip(name));
    if (s == "robot") return Condition::kRobot;
    if (s == "no_robot" || s == "no-robot" || s == "norobot") return Condition::kNoRobot;
    if (s.empty() || s == "n/a" || s == "na" || s == "none") return Condition::kNone;
    throw Error(ErrorCode::kInvalidArgument, "unknown condition '" + std::string(name) + "'");
}

std::string_view to_string(Condition condition) noexcept {
    switch (condition) {
        case Condition::kRobot: return "robot";
        case Condition::kNoRobot: return "no_robot";
        case Condition::kNone: return "n/a";
    }
    return "?";
}

std::span<const SurveyItem> instrument_items(Instrument instrument) {
    switch (instrument) {
        case Instrument::kNasaTlx: return nasa_items();
        case Instrument::kGodspeed: return godspeed_items();
        case Instrument::kAppropriateness: return appropriateness_items();
    }
    return {};
}

std::optional<std::string> canonical_item(Instrument instrument, std::string_view name) {
    std::string s = lower(strip(name));
    if (!s.empty() && s.back() == '.') s.pop_back();
    for (const SurveyItem& item : instrument_items(instrument)) {
        if (s == lower(item.key) || s == lower(item.label)) return item.key;
    }
    return std::nullopt;
}

SurveyReport analyze_survey(std::span<const SurveyResponse> responses, Instrument instrument,
                            double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0,1)");
    const bool paired_conditions = instrument == Instrument::kNasaTlx;
    const int max_score = paired_conditions ? 7 : 5;

    // (expert, item, condition) -> score
    std::map<std::tuple<std::string, std::string, Condition>, int> scores;
    std::set<std::string> experts;
    for (const SurveyResponse& r : responses) {
        if (r.instrument != instrument) continue;
        const auto key = canonical_item(instrument, r.item);
        if (!key) {
            throw Error(ErrorCode::kInvalidArgument,
                        "unknown " + std::string(to_string(instrument)) + " item '" + r.item + "'");
        }
        if (r.score < 1 || r.score > max_score) {
            throw Error(ErrorCode::kInvalidArgument, "score " + std::to_string(r.score) + " for " +
                                                         r.expert_id + "/" + *key + " outside [1," +
                                                         std::to_string(max_score) + "]");
        }
        if (paired_conditions ? r.condition == Condition::kNone : r.condition != Condition::kNone) {
            throw Error(ErrorCode::kInvalidArgument,
                        "condition '" + std::string(to_string(r.condition)) + "' not valid for " +
                            std::string(to_string(instrument)));
        }
        if (!scores.emplace(std::make_tuple(r.expert_id, *key, r.condition), r.score).second) {
            throw Error(ErrorCode::kInvalidArgument, "duplicate response " + r.expert_id + "/" + *key);
        }
        experts.insert(r.expert_id);
    }
    if (experts.empty()) {
        throw Error(ErrorCode::kIncompleteResponses,
                    "no " + std::string(to_string(instrument)) + " responses");
    }

    SurveyReport report;
    report.instrument = instrument;
    report.alpha = alpha;
    for (const SurveyItem& item : instrument_items(instrument)) {
        std::vector<double> first, second;
        for (const std::string& expert : experts) {
            auto lookup = [&](Condition c) {
                auto it = scores.find({expert, item.key, c});
                if (it == scores.end()) {
                    std::string what = expert + ", " + item.key;
                    if (c != Condition::kNone) what += " (" + std::string(to_string(c)) + ")";
                    throw Error(ErrorCode::kIncompleteResponses, what);
                }
                return static_cast<double>(it->second);
            };
            if (paired_conditions) {
                first.push_back(lookup(Condition::kRobot));
                second.push_back(lookup(Condition::kNoRobot));
            } else {
                first.push_back(lookup(Condition::kNone));
                second.push_back(kIdealScore);
            }
        }

        ItemReport row;
        row.item = item;
        row.n = first.size();
        row.mean_first = mean_of(first);
        row.mean_second = mean_of(second);
        for (std::size_t i = 0; i < first.size(); ++i) row.diffs.push_back(first[i] - second[i]);

        if (row.n < 2) {
            row.stars = "n/a";
            row.note = "too few experts for a t-test";
        } else if (all_equal(row.diffs)) {
            if (row.diffs.front() == 0.0) {
                row.stars = "ns";
                row.note = paired_conditions ? "no difference (zero variance)" : "at ideal (zero variance)";
            } else {
                row.stars = "n/a";
                row.note = "constant difference (zero variance)";
            }
        } else {
            if (row.n >= 4) row.normality = ryan_joiner(row.diffs, alpha);
            else row.note = "normality not tested (n < 4)";
            row.t_test = paired_t_test(first, second, alpha);
            row.stars = stars_for(*row.t_test->p_value);
            row.power = power_paired_t(row.n, mean_of(row.diffs), sample_sd(row.diffs), alpha);
        }
        report.items.push_back(std::move(row));
    }
    return report;
}

std::vector<SurveyResponse> parse_survey_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    cell += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                cells.push_back(strip(cell));
                cell.clear();
            } else {
                cell += c;
            }
        }
        cells.push_back(strip(cell));
        return cells;
    };

    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> column;
    std::vector<SurveyResponse> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (strip(line).empty()) continue;
        const auto cells = split(line);
        if (column.empty()) {
            for (std::size_t i = 0; i < cells.size(); ++i) column[lower(cells[i])] = i;
            for (const char* required : {"expert_id", "instrument", "condition", "item", "score"}) {
                if (!column.contains(required)) {
                    throw Error(ErrorCode::kMissingField, std::string("survey header lacks '") + required + "'");
                }
            }
            continue;
        }
        auto get = [&](const char* name) -> const std::string& {
            const std::size_t idx = column.at(name);
            if (idx >= cells.size()) {
                throw Error(ErrorCode::kMalformedLine, "line " + std::to_string(line_no) + ": too few columns");
            }
            return cells[idx];
        };
        try {
            SurveyResponse r;
            r.expert_id = get("expert_id");
            if (r.expert_id.empty()) throw Error(ErrorCode::kMissingField, "expert_id");
            r.instrument = parse_instrument(get("instrument"));
            r.condition = parse_condition(get("condition"));
            r.item = get("item");
            std::size_t used = 0;
            const std::string& score = get("score");
            r.score = std::stoi(score, &used);
            if (used != score.size()) throw std::invalid_argument("score");
            out.push_back(std::move(r));
        } catch (const Error& e) {
            throw Error(ErrorCode::kMalformedLine, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception&) {
            throw Error(ErrorCode::kMalformedLine, "line " + std::to_string(line_no) + ": bad score");
        }
    }
    if (column.empty()) throw Error(ErrorCode::kMissingField, "survey file has no header");
    return out;
}

std::vector<SurveyResponse> load_survey_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    return parse_survey_csv(in);
}

std::string format_survey_table(const SurveyReport& report) {
    const bool nasa = report.instrument == Instrument::kNasaTlx;
    std::ostringstream os;
    os << std::fixed;
    os << std::left << std::setw(6) << "item" << std::setw(5) << "grp" << std::right << std::setw(4) << "n"
       << std::setw(9) << (nasa ? "robot" : "mean") << std::setw(9) << (nasa ? "no_robot" : "ideal")
       << std::setw(8) << "RJ" << std::setw(11) << "RJ p" << std::setw(9) << "t" << std::setw(9) << "p"
       << std::setw(8) << "power" << "  sig  note\n";
    for (const ItemReport& r : report.items) {
        os << std::left << std::setw(6) << r.item.key << std::setw(5) << r.item.group << std::right
           << std::setw(4) << r.n << std::setprecision(3) << std::setw(9) << r.mean_first << std::setw(9)
           << r.mean_second;
        if (r.normality) {
            os << std::setw(8) << r.normality->statistic << std::setw(11) << to_string(*r.normality->p_band);
        } else {
            os << std::setw(8) << "-" << std::setw(11) << "-";
        }
        if (r.t_test) {
            os << std::setw(9) << r.t_test->statistic << std::setprecision(4) << std::setw(9)
               << *r.t_test->p_value;
        } else {
            os << std::setw(9) << "-" << std::setw(9) << "-";
        }
        if (r.power) os << std::setprecision(4) << std::setw(8) << *r.power;
        else os << std::setw(8) << "-";
        os << "  " << std::left << std::setw(4) << r.stars << " " << r.note << "\n";
    }
    return os.str();
}

}  // namespace persp
