#include "persp/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "persp/corpus.hpp"
#include "persp/errors.hpp"

namespace persp {
namespace {

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> specials = {
        "<pad>",
        "<unk>",
        std::string(markers::kStart),
        std::string(markers::kEnd),
        std::string(markers::kMask),
        std::string(markers::kContext),
        std::string(markers::kQuestion),
        std::string(markers::kAnswerA),
        std::string(markers::kAnswerB),
        std::string(markers::kAnswerC),
    };
    return specials;
}

bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

}  // namespace

Vocabulary::Vocabulary() : tokens_(special_tokens()) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<TokenId>(i));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> words) {
    Vocabulary vocab;
    vocab.index_.clear();
    for (std::string& word : words) {
        if (std::find(vocab.tokens_.begin(), vocab.tokens_.end(), word) != vocab.tokens_.end()) {
            continue;
        }
        vocab.tokens_.push_back(std::move(word));
    }
    for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
        vocab.index_.emplace(vocab.tokens_[i], static_cast<TokenId>(i));
    }
    return vocab;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t max_size) {
    std::map<std::string, std::size_t> counts;
    for (const std::string& text : texts) {
        for (std::string& word : split(text)) ++counts[std::move(word)];
    }
    for (const std::string& special : special_tokens()) counts.erase(special);

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> words;
    for (auto& [word, count] : ranked) {
        if (max_size != 0 && words.size() + kNumSpecial >= max_size) break;
        words.push_back(word);
    }
    return from_tokens(std::move(words));
}

std::vector<std::string> Vocabulary::split(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    while (i < text.size()) {
        if (is_space(text[i])) {
            flush();
            ++i;
            continue;
        }
        bool matched = false;
        if (text[i] == '<') {
            for (std::string_view marker : markers::kReserved) {
                if (text.substr(i).starts_with(marker)) {
                    flush();
                    out.emplace_back(marker);
                    i += marker.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) current.push_back(text[i++]);
    }
    flush();
    return out;
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const std::string& word : split(text)) ids.push_back(id(word));
    return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

}  // namespace persp
