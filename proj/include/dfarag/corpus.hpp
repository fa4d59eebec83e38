#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dfarag/common.hpp"

namespace dfarag {

struct Utterance {
    Role role = Role::user;
    std::string text;
    /// Index of the user/system exchange; both halves of an exchange share it.
    int round = 0;
    /// Placeholder turn inserted by normalization; text is empty.
    bool synthetic = false;

    bool operator==(const Utterance&) const = default;
};

struct Dialogue {
    DialogueId id = 0;
    std::vector<Utterance> utterances;

    bool operator==(const Dialogue&) const = default;
};

/// Immutable, id-indexed collection of dialogues.
class Corpus {
  public:
    Corpus() = default;
    /// Throws ValidationError on duplicate ids.
    explicit Corpus(std::vector<Dialogue> dialogues, std::string source = {}, std::string notes = {});

    const std::vector<Dialogue>& dialogues() const noexcept { return dialogues_; }
    std::size_t size() const noexcept { return dialogues_.size(); }
    bool empty() const noexcept { return dialogues_.empty(); }

    const Dialogue* find(DialogueId id) const noexcept;
    /// Throws NotFoundError.
    const Dialogue& at(DialogueId id) const;
    std::vector<DialogueId> ids() const;

    const std::string& source() const noexcept { return source_; }
    const std::string& notes() const noexcept { return notes_; }

    bool operator==(const Corpus& other) const { return dialogues_ == other.dialogues_; }

  private:
    std::vector<Dialogue> dialogues_;
    std::unordered_map<DialogueId, std::size_t> index_;
    std::string source_;
    std::string notes_;
};

enum class CorpusFormat { jsonl, plain_transcript };

struct CorpusOptions {
    Role first_role = Role::user;
};

/// `.txt` and `.transcript` map to plain_transcript, everything else to jsonl.
CorpusFormat format_from_path(const std::filesystem::path& path);

/// jsonl: one {"id"?, "turns": [{"role", "text"}]} object per line, with an
/// optional leading {"metadata": {"source", "notes"}} line.
/// plain_transcript: "User: ..." / "System: ..." lines (an optional leading
/// turn number is ignored), dialogues separated by blank lines, '#' comments.
/// Missing ids are assigned from the record ordinal. Every dialogue is passed
/// through normalize_dialogue.
Corpus parse_corpus(std::istream& in, CorpusFormat format, const CorpusOptions& options = {},
                    std::string source = {});
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const CorpusOptions& options = {});

void write_corpus_jsonl(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Merges consecutive same-role turns (joined by one space), prefixes a
/// synthetic empty turn when the dialogue does not open with `first_role`,
/// and renumbers rounds. Precondition: at least one utterance.
Dialogue normalize_dialogue(Dialogue raw, Role first_role = Role::user);

/// Seeded partition into (train, test); |test| = round(N * test_fraction).
/// Both halves keep the input order.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction, std::uint64_t seed);

}  // namespace dfarag
