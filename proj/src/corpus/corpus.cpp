#include "persp/corpus.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 5> kJsonKeys = {"context", "question", "answerA",
                                                       "answerB", "answerC"};

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::optional<OptionLabel> parse_label(const json& value, std::size_t line_no) {
    if (value.is_null()) return std::nullopt;
    std::string text;
    if (value.is_number_integer()) {
        text = std::to_string(value.get<long long>());
    } else if (value.is_string()) {
        text = trim(value.get<std::string>());
    } else {
        throw Error(ErrorCode::kMalformedLine,
                    "line " + std::to_string(line_no) + ": label must be a string or integer");
    }
    if (text.empty()) return std::nullopt;
    if (text == "A" || text == "a" || text == "1") return OptionLabel::kA;
    if (text == "B" || text == "b" || text == "2") return OptionLabel::kB;
    if (text == "C" || text == "c" || text == "3") return OptionLabel::kC;
    throw Error(ErrorCode::kMalformedLine,
                "line " + std::to_string(line_no) + ": label '" + text + "' is not A, B or C");
}

std::string& field_ref(DataPoint& point, std::size_t index) {
    switch (index) {
        case 0: return point.context;
        case 1: return point.question;
        case 2: return point.option_a;
        case 3: return point.option_b;
        default: return point.option_c;
    }
}

const std::string& field_ref(const DataPoint& point, std::size_t index) {
    return field_ref(const_cast<DataPoint&>(point), index);
}

}  // namespace

std::string_view to_string(OptionLabel label) noexcept {
    switch (label) {
        case OptionLabel::kA: return "A";
        case OptionLabel::kB: return "B";
        case OptionLabel::kC: return "C";
    }
    return "?";
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    return std::string(text.substr(begin, end - begin));
}

std::optional<std::string_view> find_reserved_marker(std::string_view text) noexcept {
    for (std::string_view marker : markers::kReserved) {
        if (text.find(marker) != std::string_view::npos) return marker;
    }
    return std::nullopt;
}

void validate_data_point(const DataPoint& point) {
    for (std::size_t i = 0; i < kJsonKeys.size(); ++i) {
        const std::string& value = field_ref(point, i);
        if (trim(value).empty()) {
            throw Error(ErrorCode::kMissingField, std::string(kJsonKeys[i]) + " is empty");
        }
        if (auto marker = find_reserved_marker(value)) {
            throw Error(ErrorCode::kMarkerCollision, std::string(kJsonKeys[i]) +
                                                         " contains reserved marker " +
                                                         std::string(*marker));
        }
    }
}

Corpus parse_corpus(std::istream& in, std::string source_id) {
    Corpus corpus;
    corpus.source_id = std::move(source_id);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::kMalformedLine, where + ": " + e.what());
        }
        if (!record.is_object()) {
            throw Error(ErrorCode::kMalformedLine, where + ": expected a JSON object");
        }
        DataPoint point;
        for (std::size_t i = 0; i < kJsonKeys.size(); ++i) {
            const std::string key(kJsonKeys[i]);
            auto it = record.find(key);
            if (it == record.end() || !it->is_string()) {
                throw Error(ErrorCode::kMissingField, where + ": field '" + key + "'");
            }
            std::string value = trim(it->get<std::string>());
            if (value.empty()) {
                throw Error(ErrorCode::kMissingField, where + ": field '" + key + "' is empty");
            }
            if (auto marker = find_reserved_marker(value)) {
                throw Error(ErrorCode::kMarkerCollision, where + ": field '" + key +
                                                             "' contains reserved marker " +
                                                             std::string(*marker));
            }
            field_ref(point, i) = std::move(value);
        }
        if (auto it = record.find("label"); it != record.end()) {
            point.gold_label = parse_label(*it, line_no);
        }
        corpus.points.push_back(std::move(point));
    }
    if (corpus.points.empty()) {
        throw Error(ErrorCode::kEmptyCorpus, "no records in " + corpus.source_id);
    }
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    return parse_corpus(in, path.string());
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
    for (const DataPoint& point : corpus.points) {
        json record = {{"context", point.context},   {"question", point.question},
                       {"answerA", point.option_a},  {"answerB", point.option_b},
                       {"answerC", point.option_c}};
        if (point.gold_label) record["label"] = std::string(to_string(*point.gold_label));
        out << record.dump() << '\n';
    }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    write_corpus(corpus, out);
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void SplitSpec::validate() const {
    for (double f : {train_fraction, eval_fraction, test_fraction}) {
        if (!(f > 0.0 && f < 1.0)) {
            throw Error(ErrorCode::kInvalidSplit, "fractions must lie in (0, 1)");
        }
    }
    const double sum = train_fraction + eval_fraction + test_fraction;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw Error(ErrorCode::kInvalidSplit,
                    "fractions sum to " + std::to_string(sum) + ", expected 1");
    }
}

CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec) {
    spec.validate();
    if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "cannot split an empty corpus");

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(spec.seed, 0x5b1d));
    rng.shuffle(order);

    const auto n = static_cast<double>(corpus.size());
    // The epsilon keeps exact products such as 1000 * 0.15 from flooring to 149.
    const auto n_eval = static_cast<std::size_t>(std::floor(n * spec.eval_fraction + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * spec.test_fraction + 1e-9));
    const std::size_t n_train = corpus.size() - n_eval - n_test;

    CorpusSplit split;
    split.train.source_id = corpus.source_id + "#train";
    split.eval.source_id = corpus.source_id + "#eval";
    split.test.source_id = corpus.source_id + "#test";
    for (std::size_t i = 0; i < order.size(); ++i) {
        Corpus& part = i < n_train ? split.train : (i < n_train + n_eval ? split.eval : split.test);
        part.points.push_back(corpus.points[order[i]]);
    }
    return split;
}

std::string render_control_token_text(const DataPoint& point) {
    validate_data_point(point);
    std::string out(markers::kStart);
    for (std::size_t i = 0; i < markers::kFieldOrder.size(); ++i) {
        out += ' ';
        out += markers::kFieldOrder[i];
        out += ' ';
        out += field_ref(point, i);
    }
    out += ' ';
    out += markers::kEnd;
    return out;
}

DataPoint parse_control_token_text(std::string_view raw) {
    const std::string text = trim(raw);
    std::string_view body(text);
    if (!body.starts_with(markers::kStart)) {
        throw Error(ErrorCode::kParseFailed, "missing marker " + std::string(markers::kStart));
    }
    body.remove_prefix(markers::kStart.size());
    const std::size_t end_pos = body.rfind(markers::kEnd);
    if (end_pos == std::string_view::npos || !trim(body.substr(end_pos + markers::kEnd.size())).empty()) {
        throw Error(ErrorCode::kParseFailed, "missing marker " + std::string(markers::kEnd));
    }
    body = body.substr(0, end_pos);

    if (!trim(body.substr(0, body.find(markers::kContext))).empty()) {
        throw Error(ErrorCode::kParseFailed, "text before " + std::string(markers::kContext));
    }

    DataPoint point;
    std::size_t cursor = 0;
    std::array<std::size_t, 5> starts{};
    for (std::size_t i = 0; i < markers::kFieldOrder.size(); ++i) {
        const std::size_t pos = body.find(markers::kFieldOrder[i], cursor);
        if (pos == std::string_view::npos) {
            throw Error(ErrorCode::kParseFailed,
                        "missing marker " + std::string(markers::kFieldOrder[i]));
        }
        if (i > 0) {
            field_ref(point, i - 1) = std::string(body.substr(starts[i - 1], pos - starts[i - 1]));
        }
        starts[i] = pos + markers::kFieldOrder[i].size();
        cursor = starts[i];
    }
    field_ref(point, 4) = std::string(body.substr(starts[4]));

    for (std::size_t i = 0; i < markers::kFieldOrder.size(); ++i) {
        std::string& value = field_ref(point, i);
        value = trim(value);
        if (auto marker = find_reserved_marker(value)) {
            throw Error(ErrorCode::kParseFailed, "unexpected marker " + std::string(*marker) +
                                                     " after " +
                                                     std::string(markers::kFieldOrder[i]));
        }
        if (value.empty()) {
            throw Error(ErrorCode::kParseFailed,
                        "empty field after " + std::string(markers::kFieldOrder[i]));
        }
    }
    return point;
}

}  // namespace persp
