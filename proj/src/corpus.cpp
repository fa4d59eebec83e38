#include "dfarag/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dfarag {

using nlohmann::json;

Corpus::Corpus(std::vector<Dialogue> dialogues, std::string source, std::string notes)
    : dialogues_(std::move(dialogues)), source_(std::move(source)), notes_(std::move(notes))
{
    index_.reserve(dialogues_.size());
    for (std::size_t i = 0; i < dialogues_.size(); ++i) {
        if (!index_.emplace(dialogues_[i].id, i).second) {
            throw ValidationError("duplicate dialogue id " + std::to_string(dialogues_[i].id));
        }
    }
}

const Dialogue* Corpus::find(DialogueId id) const noexcept
{
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &dialogues_[it->second];
}

const Dialogue& Corpus::at(DialogueId id) const
{
    if (const auto* d = find(id)) {
        return *d;
    }
    throw NotFoundError("unknown dialogue id " + std::to_string(id));
}

std::vector<DialogueId> Corpus::ids() const
{
    std::vector<DialogueId> out;
    out.reserve(dialogues_.size());
    for (const auto& d : dialogues_) {
        out.push_back(d.id);
    }
    return out;
}

CorpusFormat format_from_path(const std::filesystem::path& path)
{
    auto ext = to_lower_ascii(path.extension().string());
    if (ext == ".txt" || ext == ".transcript") {
        return CorpusFormat::plain_transcript;
    }
    return CorpusFormat::jsonl;
}

Dialogue normalize_dialogue(Dialogue raw, Role first_role)
{
    Dialogue out;
    out.id = raw.id;
    for (auto& u : raw.utterances) {
        if (!out.utterances.empty() && out.utterances.back().role == u.role) {
            auto& prev = out.utterances.back();
            if (prev.text.empty()) {
                prev.text = std::move(u.text);
            } else if (!u.text.empty()) {
                prev.text += ' ';
                prev.text += u.text;
            }
            prev.synthetic = prev.synthetic && u.synthetic;
            continue;
        }
        out.utterances.push_back(std::move(u));
    }
    if (!out.utterances.empty() && out.utterances.front().role != first_role) {
        out.utterances.insert(out.utterances.begin(), Utterance{first_role, {}, 0, true});
    }
    for (std::size_t i = 0; i < out.utterances.size(); ++i) {
        out.utterances[i].round = static_cast<int>(i / 2);
    }
    return out;
}

namespace {

struct RawRecord {
    std::optional<DialogueId> id;
    std::vector<Utterance> turns;
    std::size_t line = 0;
};

Utterance make_turn(Role role, std::string text, bool synthetic, std::size_t line)
{
    auto trimmed = trim(text);
    if (trimmed.empty() && !synthetic) {
        throw ParseError("empty utterance text", line);
    }
    return Utterance{role, synthetic ? std::string{} : std::move(trimmed), 0, synthetic};
}

std::vector<RawRecord> parse_jsonl(std::istream& in, std::string& source, std::string& notes)
{
    std::vector<RawRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!obj.is_object()) {
            throw ParseError("expected a JSON object", line_no);
        }
        if (obj.contains("metadata")) {
            if (!records.empty()) {
                throw ParseError("metadata record must come first", line_no);
            }
            const auto& meta = obj["metadata"];
            source = meta.value("source", std::string{});
            notes = meta.value("notes", std::string{});
            continue;
        }
        RawRecord rec;
        rec.line = line_no;
        if (obj.contains("id") && !obj["id"].is_null()) {
            if (!obj["id"].is_number_unsigned()) {
                throw ParseError("id must be a non-negative integer", line_no);
            }
            rec.id = obj["id"].get<DialogueId>();
        }
        if (!obj.contains("turns") || !obj["turns"].is_array()) {
            throw ParseError("missing turns array", line_no);
        }
        for (const auto& turn : obj["turns"]) {
            if (!turn.is_object() || !turn.contains("role") || !turn["role"].is_string()) {
                throw ParseError("turn needs a string role", line_no);
            }
            Role role;
            try {
                role = parse_role(turn["role"].get<std::string>());
            } catch (const ValidationError& e) {
                throw ParseError(e.what(), line_no);
            }
            bool synthetic = turn.value("synthetic", false);
            std::string text = turn.contains("text") && turn["text"].is_string() ? turn["text"].get<std::string>() : "";
            rec.turns.push_back(make_turn(role, std::move(text), synthetic, line_no));
        }
        if (rec.turns.empty()) {
            throw ParseError("dialogue has no turns", line_no);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<RawRecord> parse_transcript(std::istream& in)
{
    static const std::regex turn_re(R"(^\s*(?:\d+\.?\s+)?(user|system|agent)\s*:\s*(.*)$)", std::regex::icase);
    std::vector<RawRecord> records;
    RawRecord current;
    std::string line;
    std::size_t line_no = 0;
    auto flush = [&] {
        if (!current.turns.empty()) {
            records.push_back(std::move(current));
        }
        current = RawRecord{};
    };
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty()) {
            flush();
            continue;
        }
        if (t.front() == '#') {
            continue;
        }
        std::smatch m;
        if (!std::regex_match(t, m, turn_re)) {
            throw ParseError("expected '<User|System>: <text>'", line_no);
        }
        if (current.turns.empty()) {
            current.line = line_no;
        }
        current.turns.push_back(make_turn(parse_role(m[1].str()), m[2].str(), false, line_no));
    }
    flush();
    return records;
}

}  // namespace

Corpus parse_corpus(std::istream& in, CorpusFormat format, const CorpusOptions& options, std::string source)
{
    std::string notes;
    auto records = format == CorpusFormat::jsonl ? parse_jsonl(in, source, notes) : parse_transcript(in);

    std::set<DialogueId> seen;
    std::vector<Dialogue> dialogues;
    dialogues.reserve(records.size());
    for (std::size_t ordinal = 0; ordinal < records.size(); ++ordinal) {
        auto& rec = records[ordinal];
        DialogueId id = rec.id.value_or(ordinal);
        if (!seen.insert(id).second) {
            throw ParseError("duplicate dialogue id " + std::to_string(id), rec.line);
        }
        dialogues.push_back(normalize_dialogue(Dialogue{id, std::move(rec.turns)}, options.first_role));
    }
    return Corpus(std::move(dialogues), std::move(source), std::move(notes));
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const CorpusOptions& options)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open corpus file " + path.string());
    }
    return parse_corpus(in, format, options, path.filename().string());
}

void write_corpus_jsonl(const Corpus& corpus, std::ostream& out)
{
    if (!corpus.source().empty() || !corpus.notes().empty()) {
        json meta = {{"metadata", {{"source", corpus.source()}, {"notes", corpus.notes()}}}};
        out << meta.dump() << '\n';
    }
    for (const auto& d : corpus.dialogues()) {
        json turns = json::array();
        for (const auto& u : d.utterances) {
            json turn = {{"role", role_name(u.role)}, {"text", u.text}};
            if (u.synthetic) {
                turn["synthetic"] = true;
            }
            turns.push_back(std::move(turn));
        }
        json rec = {{"id", d.id}, {"turns", std::move(turns)}};
        out << rec.dump() << '\n';
    }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write corpus file " + path.string());
    }
    write_corpus_jsonl(corpus, out);
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
        throw std::invalid_argument("test_fraction must lie in [0, 1]");
    }
    const auto n = corpus.size();
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    Rng rng(seed);
    auto picked = rng.sample_indices(n, n_test);
    std::vector<bool> in_test(n, false);
    for (auto i : picked) {
        in_test[i] = true;
    }
    std::vector<Dialogue> train;
    std::vector<Dialogue> test;
    for (std::size_t i = 0; i < n; ++i) {
        (in_test[i] ? test : train).push_back(corpus.dialogues()[i]);
    }
    return {Corpus(std::move(train), corpus.source(), corpus.notes()),
            Corpus(std::move(test), corpus.source(), corpus.notes())};
}

}  // namespace dfarag
