#include "persp/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include "persp/corpus.hpp"
#include "persp/errors.hpp"

namespace persp {
namespace {

constexpr std::string_view kDecodePrefix = "decode.";

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::kInvalidArgument, key + ": cannot parse '" + text + "'");
    }
    return value;
}

}  // namespace

KeyValues parse_key_values(std::istream& in) {
    KeyValues values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::kInvalidArgument,
                        "config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) {
            throw Error(ErrorCode::kInvalidArgument,
                        "config line " + std::to_string(line_no) + ": empty key");
        }
        values[std::move(key)] = std::move(value);
    }
    return values;
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    return parse_key_values(in);
}

void apply_train_config(TrainConfig& c, const KeyValues& values) {
    for (const auto& [key, value] : values) {
        if (key.starts_with(kDecodePrefix)) continue;
        if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
        else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
        else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
        else if (key == "optimizer") c.optimizer = value;
        else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "max_tokens") c.max_tokens = parse_number<std::size_t>(key, value);
        else if (key == "backend") c.backend = value;
        else if (key == "embedding_dim") c.embedding_dim = parse_number<std::size_t>(key, value);
        else if (key == "hidden_dim") c.hidden_dim = parse_number<std::size_t>(key, value);
        else throw Error(ErrorCode::kInvalidArgument, "unknown training key '" + key + "'");
    }
}

void apply_decode_config(DecodeConfig& c, const KeyValues& values) {
    for (const auto& [raw_key, value] : values) {
        if (!raw_key.starts_with(kDecodePrefix)) continue;
        const std::string key = raw_key.substr(kDecodePrefix.size());
        if (key == "strategy") c.strategy = parse_decode_strategy(value);
        else if (key == "top_p") c.top_p = parse_number<double>(raw_key, value);
        else if (key == "temperature") c.temperature = parse_number<double>(raw_key, value);
        else if (key == "max_new_tokens") c.max_new_tokens = parse_number<std::size_t>(raw_key, value);
        else if (key == "seed") c.seed = parse_number<std::uint64_t>(raw_key, value);
        else throw Error(ErrorCode::kInvalidArgument, "unknown decode key '" + raw_key + "'");
    }
}

}  // namespace persp
