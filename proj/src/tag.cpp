#include "dfarag/tag.hpp"

#include <cctype>
#include <sstream>

namespace dfarag {

namespace {

constexpr std::size_t kMaxWordsPerTag = 3;

std::vector<std::string> split_ws(const std::string& text)
{
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        words.push_back(std::move(w));
    }
    return words;
}

}  // namespace

bool is_reserved(const Tag& tag) noexcept
{
    return tag == end_of_round_tag() || tag == empty_turn_tag();
}

std::optional<Tag> normalize_tag(std::string_view raw)
{
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (char ch : raw) {
        auto c = static_cast<unsigned char>(ch);
        if (c == '-' || c == '_' || std::isspace(c)) {
            cleaned.push_back(' ');
        } else if (c < 0x80 && std::ispunct(c)) {
            continue;
        } else {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    auto words = split_ws(cleaned);
    if (words.empty()) {
        return std::nullopt;
    }
    std::string token;
    for (std::size_t i = 0; i < words.size() && i < kMaxWordsPerTag; ++i) {
        if (i > 0) {
            token.push_back('-');
        }
        token += words[i];
    }
    Tag tag(std::move(token));
    if (is_reserved(tag)) {
        return std::nullopt;
    }
    return tag;
}

std::vector<std::string> tokenize_words(std::string_view text)
{
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || (c < 0x80 && std::ispunct(c))) {
            cleaned.push_back(' ');
        } else {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return split_ws(cleaned);
}

}  // namespace dfarag
