#include <fstream>

#include <nlohmann/json.hpp>

#include "persp/errors.hpp"
#include "persp/generation.hpp"

namespace persp {
namespace {

using nlohmann::json;

std::string text_field(const json& j, const char* key, const char* alt) {
    auto it = j.find(key);
    if (it == j.end() && alt != nullptr) it = j.find(alt);
    if (it == j.end() || !it->is_string()) {
        throw Error(ErrorCode::kMissingField, std::string("candidate lacks '") + key + "'");
    }
    return it->get<std::string>();
}

}  // namespace

std::string candidate_to_json(const CandidateTriple& c) {
    return json{{"context", c.context},
                {"question", c.question},
                {"option_a", c.option_a},
                {"option_b", c.option_b},
                {"option_c", c.option_c},
                {"pipeline", std::string(to_string(c.pipeline))},
                {"generation_seed", c.generation_seed}}
        .dump();
}

CandidateTriple candidate_from_json(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kMalformedLine, e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::kMalformedLine, "candidate is not a JSON object");
    CandidateTriple c;
    c.context = text_field(j, "context", nullptr);
    c.question = text_field(j, "question", nullptr);
    c.option_a = text_field(j, "option_a", "answerA");
    c.option_b = text_field(j, "option_b", "answerB");
    c.option_c = text_field(j, "option_c", "answerC");
    if (auto it = j.find("pipeline"); it != j.end() && it->is_string()) {
        c.pipeline = parse_pipeline(it->get<std::string>());
    }
    if (auto it = j.find("generation_seed"); it != j.end() && it->is_number_unsigned()) {
        c.generation_seed = it->get<std::uint64_t>();
    }
    validate_candidate(c);
    return c;
}

std::vector<CandidateTriple> load_candidates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::vector<CandidateTriple> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(candidate_from_json(line));
        } catch (const Error& e) {
            throw Error(e.code(), path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (out.empty()) throw Error(ErrorCode::kEmptyCorpus, path.string() + " has no candidates");
    return out;
}

void write_candidates(std::span<const CandidateTriple> candidates, std::ostream& out) {
    for (const CandidateTriple& c : candidates) out << candidate_to_json(c) << '\n';
}

void write_candidates(std::span<const CandidateTriple> candidates, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    write_candidates(candidates, out);
}

}  // namespace persp
