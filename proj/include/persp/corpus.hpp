#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace persp {

enum class OptionLabel { kA, kB, kC };

std::string_view to_string(OptionLabel label) noexcept;

/// One multiple-choice record: a social situation, a question about it and
/// three candidate answers. The gold label is carried through but never used
/// by the session flow, where the expert adjudicates.
struct DataPoint {
    std::string context;
    std::string question;
    std::string option_a;
    std::string option_b;
    std::string option_c;
    std::optional<OptionLabel> gold_label;

    friend bool operator==(const DataPoint&, const DataPoint&) = default;
};

struct Corpus {
    std::vector<DataPoint> points;
    std::string source_id;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

struct SplitSpec {
    double train_fraction = 0.75;
    double eval_fraction = 0.15;
    double test_fraction = 0.10;
    std::uint64_t seed = 0;

    /// Throws InvalidSplit unless every fraction is in (0,1) and they sum to 1.
    void validate() const;
};

struct CorpusSplit {
    Corpus train;
    Corpus eval;
    Corpus test;
};

namespace markers {
inline constexpr std::string_view kStart = "<|startoftext|>";
inline constexpr std::string_view kEnd = "<|endoftext|>";
inline constexpr std::string_view kContext = "<context>:";
inline constexpr std::string_view kQuestion = "<question>:";
inline constexpr std::string_view kAnswerA = "<ansa>:";
inline constexpr std::string_view kAnswerB = "<ansb>:";
inline constexpr std::string_view kAnswerC = "<ansc>:";
inline constexpr std::string_view kMask = "<mask>";

/// Field markers in the order they appear in rendered text.
inline constexpr std::array<std::string_view, 5> kFieldOrder = {kContext, kQuestion, kAnswerA,
                                                                kAnswerB, kAnswerC};
/// Every reserved string a field must not contain.
inline constexpr std::array<std::string_view, 8> kReserved = {
    kStart, kEnd, kContext, kQuestion, kAnswerA, kAnswerB, kAnswerC, kMask};
}  // namespace markers

std::string trim(std::string_view text);

/// Returns the first reserved marker contained in `text`, if any.
std::optional<std::string_view> find_reserved_marker(std::string_view text) noexcept;

/// Throws MissingField for blank fields and MarkerCollision for fields that
/// embed a reserved marker.
void validate_data_point(const DataPoint& point);

/// Reads JSON Lines with keys context/question/answerA/answerB/answerC and an
/// optional label ("A"/"B"/"C" or 1/2/3). Blank lines are skipped; line
/// numbers in errors are 1-based.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in, std::string source_id);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);

/// Seeded shuffle, then contiguous train/eval/test partition. Eval and test
/// sizes are floor(n*f); the flooring remainder goes to train.
CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec);

/// "<|startoftext|> <context>: C <question>: Q <ansa>: a <ansb>: b <ansc>: c <|endoftext|>"
std::string render_control_token_text(const DataPoint& point);

/// Inverse of render_control_token_text. Throws ParseFailed naming the first
/// missing or misplaced marker, or an empty field.
DataPoint parse_control_token_text(std::string_view text);

}  // namespace persp
