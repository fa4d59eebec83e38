#pragma once

#include <compare>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dfarag {

/// Normalized keyword summarizing part of an utterance. Construction from a
/// raw string does not normalize; use normalize_tag for untrusted input.
class Tag {
  public:
    Tag() = default;
    explicit Tag(std::string token) : token_(std::move(token)) {}

    const std::string& str() const noexcept { return token_; }
    bool empty() const noexcept { return token_.empty(); }

    auto operator<=>(const Tag&) const = default;
    bool operator==(const Tag&) const = default;

  private:
    std::string token_;
};

/// Round delimiter joining a round's tree to the next round's tree.
inline const Tag& end_of_round_tag()
{
    static const Tag tag("<eor>");
    return tag;
}

/// Stands in for a synthetic (empty) turn.
inline const Tag& empty_turn_tag()
{
    static const Tag tag("empty-turn");
    return tag;
}

bool is_reserved(const Tag& tag) noexcept;

/// Lowercases, strips leading '#', turns '-'/'_' into word breaks, removes
/// punctuation, keeps at most three words and joins them with '-'.
/// Returns nullopt when nothing is left or the result collides with a
/// reserved tag.
std::optional<Tag> normalize_tag(std::string_view raw);

/// Lowercase words with ASCII punctuation treated as separators. Shared by
/// the keyword tagger and the BM25 index.
std::vector<std::string> tokenize_words(std::string_view text);

}  // namespace dfarag

template <>
struct std::hash<dfarag::Tag> {
    std::size_t operator()(const dfarag::Tag& tag) const noexcept { return std::hash<std::string>{}(tag.str()); }
};
