#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfarag/corpus.hpp"
#include "dfarag/llm_client.hpp"
#include "dfarag/tag.hpp"

namespace dfarag {

/// Surface keyword or phrase -> tag. Scanned in key order.
using Lexicon = std::map<std::string, Tag>;

/// Loads a JSON object {"surface phrase": "tag", ...}; tags are normalized.
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon lexicon_from_json(const std::string& text);

enum class TaggerKind { keyword, llm };

struct TaggerConfig {
    TaggerKind kind = TaggerKind::keyword;
    Lexicon lexicon;
    std::string prompt_template = "compress-v1";
    std::size_t max_tags_per_utterance = 4;
};

class Tagger {
  public:
    virtual ~Tagger() = default;

    /// One ordered tag list per utterance, indexed like dialogue.utterances.
    virtual std::vector<std::vector<Tag>> tag_dialogue(const Dialogue& dialogue) const = 0;

    virtual std::vector<Tag> tag_utterance(const Utterance& utterance) const;
};

/// Deterministic lexicon matcher: a key matches when its word sequence
/// occurs contiguously in the utterance's words.
class KeywordTagger final : public Tagger {
  public:
    /// Throws ValidationError on an empty lexicon.
    explicit KeywordTagger(Lexicon lexicon, std::size_t max_tags = 4);

    std::vector<std::vector<Tag>> tag_dialogue(const Dialogue& dialogue) const override;
    std::vector<Tag> tag_utterance(const Utterance& utterance) const override;

  private:
    std::vector<std::pair<std::vector<std::string>, Tag>> keys_;
    std::size_t max_tags_;
};

/// Tags a whole dialogue per request with the compression prompt.
class LlmTagger final : public Tagger {
  public:
    LlmTagger(CompletionClient& client, std::size_t max_tags = 4) : client_(client), max_tags_(max_tags) {}

    std::vector<std::vector<Tag>> tag_dialogue(const Dialogue& dialogue) const override;

  private:
    CompletionClient& client_;
    std::size_t max_tags_;
};

/// `client` is required for TaggerKind::llm and ignored otherwise.
std::unique_ptr<Tagger> make_tagger(const TaggerConfig& config, CompletionClient* client = nullptr);

/// Synthetic or whitespace-only utterances yield the reserved empty-turn tag.
std::vector<Tag> extract_tags(const Utterance& utterance, const Tagger& tagger);

/// Normalizes, drops rejects and duplicates (first occurrence wins), caps at max_tags.
std::vector<Tag> clean_tags(const std::vector<std::string>& raw, std::size_t max_tags);

/// Prompt sent to the LLM tagger for one dialogue.
std::string render_tagging_prompt(const Dialogue& dialogue);

/// Parses "<id> <User|System>: #t1 #t2 ..." lines (surrounding quotes
/// tolerated; without '#' the phrase is split on whitespace). When
/// `utterance_count` is given, indices outside it are dropped and reported
/// through `warnings`. Throws TaggerError when no line parses.
std::map<std::size_t, std::vector<Tag>> parse_tagger_output(const std::string& raw,
                                                            std::optional<std::size_t> utterance_count = std::nullopt,
                                                            std::vector<std::string>* warnings = nullptr,
                                                            std::size_t max_tags = 4);

/// Round/role-scoped table of per-dialogue tag sets. Tag lists keep
/// extraction order for inspection but are treated as sets everywhere.
class RoundTagTable {
  public:
    struct Stage {
        int round = 0;
        Role role = Role::user;
        auto operator<=>(const Stage&) const = default;
    };
    using Entries = std::map<DialogueId, std::vector<Tag>>;

    explicit RoundTagTable(Role first_role = Role::user) : first_role_(first_role) {}

    void set(int round, Role role, DialogueId id, std::vector<Tag> tags);

    /// nullptr when the stage is absent.
    const Entries* entries(int round, Role role) const;
    const std::vector<Tag>* tags(int round, Role role, DialogueId id) const;

    /// Stages in conversational order: by round, first_role half first.
    std::vector<Stage> stages() const;
    std::vector<DialogueId> dialogue_ids() const;
    Role first_role() const noexcept { return first_role_; }
    bool empty() const noexcept { return stages_.empty(); }

    /// Copy keeping only the listed dialogues.
    RoundTagTable restricted_to(const std::vector<DialogueId>& ids) const;

    bool operator==(const RoundTagTable&) const = default;

    std::string to_json() const;
    static RoundTagTable from_json(const std::string& text);

  private:
    Role first_role_;
    std::map<Stage, Entries> stages_;
};

void save_tag_table(const RoundTagTable& table, const std::filesystem::path& path);
RoundTagTable load_tag_table(const std::filesystem::path& path);

struct TagCorpusOptions {
    bool skip_errors = false;
};

struct TagCorpusResult {
    RoundTagTable table;
    /// Dialogues dropped in skip-errors mode, with the failure message.
    std::vector<std::pair<DialogueId, std::string>> skipped;
};

/// Throws TaggerError naming the dialogue unless skip_errors is set.
TagCorpusResult tag_corpus(const Corpus& corpus, const Tagger& tagger, const TagCorpusOptions& options = {},
                           Role first_role = Role::user);

}  // namespace dfarag
