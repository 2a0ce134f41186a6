#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace persp {

enum class Decision { kRejectH0, kFailToReject };
std::string_view to_string(Decision decision) noexcept;

/// Ryan-Joiner reports p as one of four bands.
enum class PBand { kAbove10, k05To10, kBelow05, kBelow01 };
std::string_view to_string(PBand band) noexcept;
double band_upper_bound(PBand band) noexcept;

struct TestResult {
    double statistic = 0.0;
    double df = 0.0;
    std::optional<double> p_value;  // exact tests
    std::optional<PBand> p_band;    // banded tests
    Decision decision = Decision::kFailToReject;
    double alpha = 0.05;
};

/// Critical values of the Ryan-Joiner correlation for alpha in {0.10, 0.05,
/// 0.01}. The polynomial-in-1/sqrt(n) approximations of Ryan and Joiner
/// (1976), as used by Minitab.
double ryan_joiner_critical(std::size_t n, double alpha);

/// Correlation between the ordered sample and its normal scores at Blom
/// positions (i - 3/8) / (n + 1/4). Rejects normality when the band's upper
/// bound is <= alpha. Requires n >= 4 and nonzero variance.
TestResult ryan_joiner(std::span<const double> sample, double alpha = 0.05);

/// Two-sided paired t-test on x - y with df = n - 1.
TestResult paired_t_test(std::span<const double> x, std::span<const double> y, double alpha = 0.05);

/// Two-sided power of the paired t-test: P(|T| > t_crit) where T is
/// noncentral t with df n - 1 and noncentrality sqrt(n) * mean_diff / sd_diff,
/// integrated numerically over the chi distribution of the denominator.
double power_paired_t(std::size_t n, double mean_diff, double sd_diff, double alpha = 0.05);

enum class Instrument { kNasaTlx, kGodspeed, kAppropriateness };
Instrument parse_instrument(std::string_view name);
std::string_view to_string(Instrument instrument) noexcept;

enum class Condition { kRobot, kNoRobot, kNone };
Condition parse_condition(std::string_view name);
std::string_view to_string(Condition condition) noexcept;

struct SurveyResponse {
    std::string expert_id;
    Instrument instrument = Instrument::kNasaTlx;
    Condition condition = Condition::kNone;
    std::string item;
    int score = 0;
};

struct SurveyItem {
    std::string key;    // e.g. "Perf", "LK2", "Q7"
    std::string group;  // Godspeed feature; empty otherwise
    std::string label;
};

/// Canonical item order: 6 NASA TLX dimensions, 24 Godspeed subcategories,
/// 8 Appropriateness questions.
std::span<const SurveyItem> instrument_items(Instrument instrument);

/// Maps a CSV item name (key, key with a trailing '.', or label; case
/// insensitive) to its canonical key.
std::optional<std::string> canonical_item(Instrument instrument, std::string_view name);

struct ItemReport {
    SurveyItem item;
    std::size_t n = 0;
    double mean_first = 0.0;   // robot session, or the experts' scores
    double mean_second = 0.0;  // no-robot session, or the ideal score
    std::vector<double> diffs;
    std::optional<TestResult> normality;
    std::optional<TestResult> t_test;
    std::optional<double> power;
    std::string stars;  // "ns", "*", "**" or "n/a"
    std::string note;
};

struct SurveyReport {
    Instrument instrument = Instrument::kNasaTlx;
    double alpha = 0.05;
    std::vector<ItemReport> items;
};

inline constexpr double kIdealScore = 5.0;

/// Per-item diffs (robot - no_robot for NASA TLX, score - 5 otherwise),
/// Ryan-Joiner, paired t and observed power. Zero-variance diffs are reported
/// in the note instead of raising. Responses for other instruments are
/// ignored.
SurveyReport analyze_survey(std::span<const SurveyResponse> responses, Instrument instrument,
                            double alpha = 0.05);

/// CSV with header expert_id,instrument,condition,item,score.
std::vector<SurveyResponse> parse_survey_csv(std::istream& in);
std::vector<SurveyResponse> load_survey_csv(const std::filesystem::path& path);

std::string format_survey_table(const SurveyReport& report);

}  // namespace persp
