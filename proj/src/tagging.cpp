#include "dfarag/tagging.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dfarag {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const char* const kCompressPrompt = R"(# Task Description

You are helping me compress the following dialog with customer service into the following form:

<id> <User/System>: <compressed phrase>

You will have to follow several principles:
1. Please use words as few as possible, ideally no more than 3 words.
2. The summarization needs to focus on the actual events/issues/queries/solutions.


# Example

Input:
"0 User: What is going on with my keyboard... fix it"
Output:
"0 User: #keyboard #issue"
)";

std::string role_label(Role role)
{
    return role == Role::system ? "System" : "User";
}

bool contains_sequence(const std::vector<std::string>& words, const std::vector<std::string>& key)
{
    if (key.empty() || key.size() > words.size()) {
        return false;
    }
    return std::search(words.begin(), words.end(), key.begin(), key.end()) != words.end();
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Lexicon lexicon_from_json(const std::string& text)
{
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("lexicon: ") + e.what(), 0);
    }
    if (!obj.is_object()) {
        throw ParseError("lexicon must be a JSON object", 0);
    }
    Lexicon lexicon;
    for (const auto& [surface, value] : obj.items()) {
        if (!value.is_string()) {
            throw ParseError("lexicon value for '" + surface + "' must be a string", 0);
        }
        auto tag = normalize_tag(value.get<std::string>());
        if (!tag) {
            throw ValidationError("lexicon tag for '" + surface + "' normalizes to nothing or a reserved tag");
        }
        lexicon.emplace(surface, *tag);
    }
    return lexicon;
}

Lexicon load_lexicon(const std::filesystem::path& path)
{
    return lexicon_from_json(read_file(path));
}

std::vector<Tag> Tagger::tag_utterance(const Utterance& utterance) const
{
    Dialogue single{0, {utterance}};
    auto tags = tag_dialogue(single);
    return tags.empty() ? std::vector<Tag>{} : std::move(tags.front());
}

KeywordTagger::KeywordTagger(Lexicon lexicon, std::size_t max_tags) : max_tags_(max_tags)
{
    if (lexicon.empty()) {
        throw ValidationError("keyword tagger needs a nonempty lexicon");
    }
    for (auto& [surface, tag] : lexicon) {
        auto words = tokenize_words(surface);
        if (words.empty()) {
            throw ValidationError("lexicon key '" + surface + "' has no words");
        }
        keys_.emplace_back(std::move(words), tag);
    }
}

std::vector<Tag> KeywordTagger::tag_utterance(const Utterance& utterance) const
{
    if (utterance.synthetic || trim(utterance.text).empty()) {
        return {empty_turn_tag()};
    }
    auto words = tokenize_words(utterance.text);
    std::vector<Tag> out;
    for (const auto& [key, tag] : keys_) {
        if (out.size() >= max_tags_) {
            break;
        }
        if (contains_sequence(words, key) && std::find(out.begin(), out.end(), tag) == out.end()) {
            out.push_back(tag);
        }
    }
    return out;
}

std::vector<std::vector<Tag>> KeywordTagger::tag_dialogue(const Dialogue& dialogue) const
{
    std::vector<std::vector<Tag>> out;
    out.reserve(dialogue.utterances.size());
    for (const auto& u : dialogue.utterances) {
        out.push_back(tag_utterance(u));
    }
    return out;
}

std::string render_tagging_prompt(const Dialogue& dialogue)
{
    std::string prompt = kCompressPrompt;
    prompt += "\n# Input\n\n";
    for (std::size_t i = 0; i < dialogue.utterances.size(); ++i) {
        const auto& u = dialogue.utterances[i];
        prompt += std::to_string(i) + " " + role_label(u.role) + ": " + u.text + "\n";
    }
    prompt += "\n# Output\n";
    return prompt;
}

std::vector<std::vector<Tag>> LlmTagger::tag_dialogue(const Dialogue& dialogue) const
{
    std::string raw;
    try {
        raw = client_.complete(render_tagging_prompt(dialogue));
    } catch (const ServiceError& e) {
        throw TaggerError(std::string("tagger transport: ") + e.what(), e.raw());
    }
    auto parsed = parse_tagger_output(raw, dialogue.utterances.size(), nullptr, max_tags_);
    std::vector<std::vector<Tag>> out(dialogue.utterances.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& u = dialogue.utterances[i];
        if (u.synthetic || trim(u.text).empty()) {
            out[i] = {empty_turn_tag()};
        } else if (auto it = parsed.find(i); it != parsed.end()) {
            out[i] = it->second;
        }
    }
    return out;
}

std::unique_ptr<Tagger> make_tagger(const TaggerConfig& config, CompletionClient* client)
{
    if (config.kind == TaggerKind::keyword) {
        return std::make_unique<KeywordTagger>(config.lexicon, config.max_tags_per_utterance);
    }
    if (client == nullptr) {
        throw ValidationError("llm tagger needs a completion client");
    }
    if (config.prompt_template != "compress-v1") {
        throw ValidationError("unknown tagging prompt template '" + config.prompt_template + "'");
    }
    return std::make_unique<LlmTagger>(*client, config.max_tags_per_utterance);
}

std::vector<Tag> extract_tags(const Utterance& utterance, const Tagger& tagger)
{
    if (utterance.synthetic || trim(utterance.text).empty()) {
        return {empty_turn_tag()};
    }
    return tagger.tag_utterance(utterance);
}

std::vector<Tag> clean_tags(const std::vector<std::string>& raw, std::size_t max_tags)
{
    std::vector<Tag> out;
    for (const auto& r : raw) {
        if (out.size() >= max_tags) {
            break;
        }
        auto tag = normalize_tag(r);
        if (tag && std::find(out.begin(), out.end(), *tag) == out.end()) {
            out.push_back(std::move(*tag));
        }
    }
    return out;
}

std::map<std::size_t, std::vector<Tag>> parse_tagger_output(const std::string& raw,
                                                            std::optional<std::size_t> utterance_count,
                                                            std::vector<std::string>* warnings, std::size_t max_tags)
{
    static const std::regex line_re(R"(^\s*"?\s*(\d+)\s+(user|system|agent)\s*:\s*(.*?)\s*"?\s*$)",
                                    std::regex::icase);
    std::map<std::size_t, std::vector<std::string>> pieces;
    std::size_t parsed_lines = 0;
    std::istringstream in(raw);
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, line_re)) {
            continue;
        }
        ++parsed_lines;
        std::size_t index = 0;
        try {
            index = std::stoull(m[1].str());
        } catch (const std::exception&) {
            continue;
        }
        if (utterance_count && index >= *utterance_count) {
            if (warnings) {
                warnings->push_back("dropping tags for utterance " + std::to_string(index) + " outside dialogue");
            }
            continue;
        }
        auto phrase = m[3].str();
        auto& bucket = pieces[index];
        if (phrase.find('#') != std::string::npos) {
            std::istringstream parts(phrase);
            std::string part;
            while (std::getline(parts, part, '#')) {
                if (!trim(part).empty()) {
                    bucket.push_back(part);
                }
            }
        } else {
            std::istringstream words(phrase);
            std::string w;
            while (words >> w) {
                bucket.push_back(w);
            }
        }
    }
    if (parsed_lines == 0) {
        throw TaggerError("tagger output has no '<id> <User|System>: ...' lines", raw);
    }
    std::map<std::size_t, std::vector<Tag>> out;
    for (auto& [index, raw_tags] : pieces) {
        out[index] = clean_tags(raw_tags, max_tags);
    }
    return out;
}

void RoundTagTable::set(int round, Role role, DialogueId id, std::vector<Tag> tags)
{
    if (round < 0 || role == Role::start) {
        throw std::invalid_argument("RoundTagTable::set: bad stage");
    }
    std::vector<Tag> unique;
    for (auto& t : tags) {
        if (std::find(unique.begin(), unique.end(), t) == unique.end()) {
            unique.push_back(std::move(t));
        }
    }
    stages_[Stage{round, role}][id] = std::move(unique);
}

const RoundTagTable::Entries* RoundTagTable::entries(int round, Role role) const
{
    auto it = stages_.find(Stage{round, role});
    return it == stages_.end() ? nullptr : &it->second;
}

const std::vector<Tag>* RoundTagTable::tags(int round, Role role, DialogueId id) const
{
    const auto* e = entries(round, role);
    if (e == nullptr) {
        return nullptr;
    }
    auto it = e->find(id);
    return it == e->end() ? nullptr : &it->second;
}

std::vector<RoundTagTable::Stage> RoundTagTable::stages() const
{
    std::vector<Stage> out;
    for (const auto& [stage, entries] : stages_) {
        out.push_back(stage);
    }
    std::sort(out.begin(), out.end(), [this](const Stage& a, const Stage& b) {
        auto ka = std::pair(a.round, a.role == first_role_ ? 0 : 1);
        auto kb = std::pair(b.round, b.role == first_role_ ? 0 : 1);
        return ka < kb;
    });
    return out;
}

std::vector<DialogueId> RoundTagTable::dialogue_ids() const
{
    std::set<DialogueId> ids;
    for (const auto& [stage, entries] : stages_) {
        for (const auto& [id, tags] : entries) {
            ids.insert(id);
        }
    }
    return {ids.begin(), ids.end()};
}

RoundTagTable RoundTagTable::restricted_to(const std::vector<DialogueId>& ids) const
{
    std::set<DialogueId> keep(ids.begin(), ids.end());
    RoundTagTable out(first_role_);
    for (const auto& [stage, entries] : stages_) {
        for (const auto& [id, tags] : entries) {
            if (keep.count(id) != 0) {
                out.stages_[stage][id] = tags;
            }
        }
    }
    return out;
}

std::string RoundTagTable::to_json() const
{
    ordered_json rounds = ordered_json::array();
    for (const auto& stage : stages()) {
        ordered_json entries = ordered_json::object();
        for (const auto& [id, tags] : stages_.at(stage)) {
            ordered_json list = ordered_json::array();
            for (const auto& t : tags) {
                list.push_back(t.str());
            }
            entries[std::to_string(id)] = std::move(list);
        }
        rounds.push_back({{"round", stage.round}, {"role", role_name(stage.role)}, {"entries", std::move(entries)}});
    }
    ordered_json doc = {{"version", 1}, {"first_role", role_name(first_role_)}, {"rounds", std::move(rounds)}};
    return doc.dump(2) + "\n";
}

RoundTagTable RoundTagTable::from_json(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("tag table: ") + e.what(), 0);
    }
    try {
        if (doc.at("version").get<int>() != 1) {
            throw ValidationError("unsupported tag table version");
        }
        RoundTagTable table(parse_role(doc.value("first_role", std::string("user"))));
        for (const auto& r : doc.at("rounds")) {
            int round = r.at("round").get<int>();
            Role role = parse_role(r.at("role").get<std::string>());
            for (const auto& [key, list] : r.at("entries").items()) {
                std::size_t used = 0;
                DialogueId id = std::stoull(key, &used);
                if (used != key.size()) {
                    throw ValidationError("bad dialogue id key '" + key + "'");
                }
                std::vector<Tag> tags;
                for (const auto& t : list) {
                    tags.emplace_back(t.get<std::string>());
                }
                table.set(round, role, id, std::move(tags));
            }
        }
        return table;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed tag table: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("malformed tag table: ") + e.what());
    }
}

void save_tag_table(const RoundTagTable& table, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << table.to_json();
}

RoundTagTable load_tag_table(const std::filesystem::path& path)
{
    return RoundTagTable::from_json(read_file(path));
}

TagCorpusResult tag_corpus(const Corpus& corpus, const Tagger& tagger, const TagCorpusOptions& options,
                           Role first_role)
{
    TagCorpusResult result{RoundTagTable(first_role), {}};
    for (const auto& d : corpus.dialogues()) {
        std::vector<std::vector<Tag>> tags;
        try {
            tags = tagger.tag_dialogue(d);
        } catch (const ServiceError& e) {
            if (options.skip_errors) {
                result.skipped.emplace_back(d.id, e.what());
                continue;
            }
            throw TaggerError("dialogue " + std::to_string(d.id) + ": " + e.what(), e.raw());
        }
        for (std::size_t i = 0; i < d.utterances.size(); ++i) {
            const auto& u = d.utterances[i];
            result.table.set(u.round, u.role, d.id, i < tags.size() ? tags[i] : std::vector<Tag>{});
        }
    }
    return result;
}

}  // namespace dfarag
