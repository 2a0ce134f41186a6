#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace persp {

using TokenId = std::int32_t;

/// Word-level vocabulary. Tokens are whitespace-delimited words; the start,
/// end, mask and field markers are atomic entries with fixed ids so that a
/// marker is never split or merged with neighbouring text.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kStart = 2;
    static constexpr TokenId kEnd = 3;
    static constexpr TokenId kMask = 4;
    static constexpr TokenId kContextMarker = 5;
    static constexpr TokenId kQuestionMarker = 6;
    static constexpr TokenId kAnswerAMarker = 7;
    static constexpr TokenId kAnswerBMarker = 8;
    static constexpr TokenId kAnswerCMarker = 9;
    static constexpr TokenId kNumSpecial = 10;

    Vocabulary();

    /// Specials first, then words by descending frequency (ties broken
    /// lexicographically). `max_size` of 0 means unbounded.
    static Vocabulary build(std::span<const std::string> texts, std::size_t max_size = 0);
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    /// Whitespace split that also isolates reserved markers glued to words.
    static std::vector<std::string> split(std::string_view text);

    TokenId id(std::string_view token) const;
    const std::string& token(TokenId id) const;
    std::size_t size() const noexcept { return tokens_.size(); }
    static bool is_special(TokenId id) noexcept { return id >= 0 && id < kNumSpecial; }
    static bool is_field_marker(TokenId id) noexcept {
        return id >= kContextMarker && id <= kAnswerCMarker;
    }

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

}  // namespace persp
