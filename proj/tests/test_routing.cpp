#include <doctest.h>

#include <atomic>
#include <condition_variable>
#include <thread>

#include "dfarag/persistence.hpp"
#include "dfarag/routing.hpp"
#include "support/support.hpp"

using namespace dfarag;
using testsupport::data_path;
using testsupport::tags;

namespace {

struct Toy {
    std::shared_ptr<const Automaton> automaton;
    std::shared_ptr<const Corpus> corpus;
    KeywordTagger tagger;
    CannedGenerator canned;

    Toy()
        : automaton(std::make_shared<Automaton>(load_automaton(data_path("golden_automaton.json")))),
          corpus(std::make_shared<Corpus>(load_corpus(data_path("toy_corpus.jsonl"), CorpusFormat::jsonl))),
          tagger(load_lexicon(data_path("toy_lexicon.json"))),
          canned(CannedGenerator::load(data_path("toy_canned.json")))
    {}
};

std::vector<std::uint32_t> raw(const std::vector<StateId>& path)
{
    std::vector<std::uint32_t> out;
    for (auto q : path) {
        out.push_back(q.value);
    }
    return out;
}

class StubClient : public CompletionClient {
  public:
    explicit StubClient(std::string reply) : reply(std::move(reply)) {}
    std::string complete(const std::string& prompt) override
    {
        last_prompt = prompt;
        return reply;
    }
    std::string reply;
    std::string last_prompt;
};

class ThrowingGenerator : public Generator {
  public:
    std::string generate(const GenerationRequest&) override { throw GeneratorError("model offline", "503"); }
};

}  // namespace

TEST_CASE("navigate on the toy automaton")
{
    Toy toy;
    const auto& a = *toy.automaton;

    auto none = navigate(a, a.start(), {});
    CHECK(none.state == a.start());
    CHECK(none.consumed.empty());
    CHECK(none.matched);
    CHECK(raw(none.path) == std::vector<std::uint32_t>{0});

    auto hit = navigate(a, a.start(), tags({"battery", "greet"}));
    CHECK(raw(hit.path) == std::vector<std::uint32_t>{0, 1, 2});
    CHECK(hit.consumed == tags({"greet", "battery"}));
    CHECK(hit.matched);
    CHECK_FALSE(hit.eor_hop);

    auto ood = navigate(a, a.start(), tags({"nba-tickets"}));
    CHECK(ood.state == a.start());
    CHECK(ood.consumed.empty());
    CHECK_FALSE(ood.matched);

    auto partial = navigate(a, a.start(), tags({"greet", "nba-tickets"}));
    CHECK(partial.state == StateId{1});
    CHECK_FALSE(partial.matched);

    // A system-stage walk crosses the <eor> edge when the role matches.
    auto sys = navigate(a, StateId{2}, tags({"link"}), Role::system);
    CHECK(sys.eor_hop);
    CHECK(raw(sys.path) == std::vector<std::uint32_t>{2, 5, 6});
    auto wrong_role = navigate(a, StateId{2}, tags({"link"}), Role::user);
    CHECK_FALSE(wrong_role.eor_hop);
    CHECK_FALSE(wrong_role.matched);

    CHECK_THROWS_AS(navigate(a, StateId{77}, {}), NotFoundError);
}

TEST_CASE("navigate is pure and ignores tag order")
{
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        auto a = build_automaton(testsupport::random_table(rng), BuildConfig{rng.below(3)});
        std::vector<Tag> ts;
        for (char c = 'a'; c < 'g'; ++c) {
            if (rng.below(2) == 0) {
                ts.emplace_back(std::string(1, c));
            }
        }
        const StateId from{static_cast<std::uint32_t>(rng.below(a.size()))};
        auto first = navigate(a, from, ts);
        std::reverse(ts.begin(), ts.end());
        auto second = navigate(a, from, ts);
        REQUIRE(first.state == second.state);
        REQUIRE(first.consumed == second.consumed);
        REQUIRE(first.path == second.path);
        REQUIRE(first.matched == second.matched);
        REQUIRE(first.path.size() == first.consumed.size() + 1 + (first.eor_hop ? 1 : 0));
        REQUIRE(first.path.back() == first.state);
    }
}

TEST_CASE("advance_past_system descends the system stage")
{
    Toy toy;
    const auto& a = *toy.automaton;
    CHECK(advance_past_system(a, StateId{2}) == StateId{6});
    CHECK(advance_past_system(a, StateId{4}) == StateId{10});
    CHECK(advance_past_system(a, StateId{1}) == StateId{1});
    CHECK(advance_past_system(a, StateId{6}) == StateId{6});
}

TEST_CASE("retrieve_exemplars")
{
    Automaton a;
    DialogueIdSet ten;
    std::vector<Dialogue> ds;
    for (DialogueId id = 1; id <= 10; ++id) {
        ten.insert(id);
        ds.push_back(Dialogue{id, {Utterance{Role::user, "x", 0, false}}});
    }
    a.mutable_state(a.start()).dialogue_ids = ten;
    auto four = a.add_state(0, Role::user, {4});
    auto empty = a.add_state(0, Role::user, {});
    auto wide = a.add_state(0, Role::user, ten);
    a.add_transition(a.start(), Tag("a"), four);
    a.add_transition(four, Tag("b"), empty);
    a.add_transition(a.start(), Tag("c"), wide);
    Corpus corpus(ds);

    CHECK(retrieve_exemplars(a, four, corpus, 5, 0).dialogue_ids == std::vector<DialogueId>{4});

    auto x = retrieve_exemplars(a, wide, corpus, 5, 7);
    auto y = retrieve_exemplars(a, wide, corpus, 5, 7);
    CHECK(x.dialogue_ids.size() == 5);
    CHECK(x.dialogue_ids == y.dialogue_ids);
    CHECK(std::is_sorted(x.dialogue_ids.begin(), x.dialogue_ids.end()));
    CHECK(retrieve_exemplars(a, wide, corpus, 5, 0, SamplingMode::lowest_ids).dialogue_ids ==
          std::vector<DialogueId>{1, 2, 3, 4, 5});

    std::vector<StateId> path{a.start(), four, empty};
    auto fallback = retrieve_exemplars(a, empty, corpus, 5, 0, SamplingMode::seeded, &path);
    CHECK(fallback.source_state == four);
    CHECK(fallback.dialogue_ids == std::vector<DialogueId>{4});
    auto to_start = retrieve_exemplars(a, empty, corpus, 3, 0);
    CHECK(to_start.source_state == a.start());
    CHECK(to_start.dialogue_ids.size() == 3);

    // Ids missing from the serving corpus are skipped.
    Corpus small({ds[0], ds[1]});
    CHECK(retrieve_exemplars(a, wide, small, 5, 0).dialogue_ids == std::vector<DialogueId>{1, 2});
    CHECK(retrieve_exemplars(a, four, small, 5, 0).source_state == a.start());

    // Every k-subset shows up under some seed, each with similar frequency.
    std::map<std::vector<DialogueId>, int> seen;
    for (std::uint64_t seed = 0; seed < 4000; ++seed) {
        ++seen[retrieve_exemplars(a, wide, corpus, 2, seed).dialogue_ids];
    }
    CHECK(seen.size() == 45);
    for (const auto& [subset, count] : seen) {
        CHECK(count > 40);
        CHECK(count < 150);
    }
}

TEST_CASE("compile_prompt")
{
    Toy toy;
    Dialogue partial{0, {Utterance{Role::user, "hi my battery drains", 0, false}}};

    auto none = compile_prompt(ExemplarSet{{}, StateId{0}}, partial, *toy.corpus);
    CHECK(none.exemplar_transcripts.empty());
    CHECK(none.text.rfind("# Task Description", 0) == 0);
    CHECK(none.text.find("{examples}") == std::string::npos);
    CHECK(none.text.find("0 USER: hi my battery drains\n") != std::string::npos);

    auto one = compile_prompt(ExemplarSet{{1}, StateId{2}}, partial, *toy.corpus);
    REQUIRE(one.exemplar_transcripts.size() == 1);
    CHECK(one.exemplar_transcripts[0] == "0 USER: hi my battery drains fast\n0 SYSTEM: please try the update link\n");
    const auto block = "reference.\n\n0 USER: hi my battery drains fast\n0 SYSTEM: please try the update link\n\n# Remarks";
    CHECK(one.text.find(block) != std::string::npos);

    auto three = compile_prompt(ExemplarSet{{3, 1, 2}, StateId{0}}, partial, *toy.corpus);
    REQUIRE(three.exemplar_transcripts.size() == 3);
    CHECK(three.text.find("i want a refund") < three.text.find("battery drains fast"));
    CHECK(three.text.find("battery drains fast") < three.text.find("screen is cracked"));

    CHECK_THROWS_AS(compile_prompt(ExemplarSet{{99}, StateId{0}}, partial, *toy.corpus), NotFoundError);
}

TEST_CASE("generators")
{
    Toy toy;
    Dialogue partial{0, {Utterance{Role::user, "hi", 0, false}}};
    ExemplarSet ex{{2}, StateId{3}};
    auto prompt = compile_prompt(ex, partial, *toy.corpus);

    NavigationResult nav;
    nav.state = StateId{3};
    nav.consumed = tags({"greet", "screen"});
    CHECK(toy.canned.generate({prompt, nav, ex, partial, *toy.corpus}) == "here is the screen repair link");
    nav.state = StateId{2};
    CHECK(toy.canned.generate({prompt, nav, ex, partial, *toy.corpus}) == "please try update link");
    nav.state = StateId{9};
    nav.consumed = {};
    CHECK(toy.canned.generate({prompt, nav, ex, partial, *toy.corpus}) ==
          "could you tell me more about the device issue?");
    CannedGenerator strict;
    CHECK_THROWS_AS(strict.generate({prompt, nav, ex, partial, *toy.corpus}), GeneratorError);
    CHECK_THROWS_AS(CannedGenerator::from_json("{\"by_state\":{\"x\":\"y\"}}"), ParseError);

    ExemplarReplayGenerator replay;
    CHECK(replay.generate({prompt, nav, ex, partial, *toy.corpus}) == "here is the repair link");
    ExemplarSet nothing{{}, StateId{0}};
    CHECK(replay.generate({prompt, nav, nothing, partial, *toy.corpus}) == "Thank you for reaching out.");

    StubClient client("0 USER: hi\n0 SYSTEM: happy to help\n");
    LlmGenerator llm(client);
    CHECK(llm.generate({prompt, nav, ex, partial, *toy.corpus}) == "happy to help");
    CHECK(client.last_prompt == prompt.text);
    client.reply = "   ";
    CHECK_THROWS_AS(llm.generate({prompt, nav, ex, partial, *toy.corpus}), GeneratorError);

    CHECK(extract_system_reply("1 SYSTEM: a\n2 SYSTEM: b", 2) == "b");
    CHECK(extract_system_reply(" plain text \n", 0) == "plain text");
}

TEST_CASE("chat_step reproduces the toy session")
{
    Toy toy;
    Session session("s", toy.automaton, toy.corpus, SessionOptions{7, 5, SamplingMode::seeded});

    auto first = chat_step(session, "hi my battery drains", toy.tagger, toy.canned);
    CHECK(first.response == "please try update link");
    CHECK(first.navigation.matched);
    CHECK(first.navigation.state == StateId{2});
    CHECK(first.exemplars.dialogue_ids == std::vector<DialogueId>{1});
    CHECK(session.snapshot().current == StateId{6});
    CHECK(session.snapshot().last_valid == StateId{2});

    auto empty = chat_step(session, "", toy.tagger, toy.canned);
    CHECK(empty.tags == std::vector<Tag>{empty_turn_tag()});
    CHECK_FALSE(empty.navigation.matched);
    CHECK(empty.exemplars.source_state == StateId{2});

    auto ood = chat_step(session, "book NBA game tickets", toy.tagger, toy.canned);
    CHECK(ood.tags == tags({"nba-tickets"}));
    CHECK_FALSE(ood.navigation.matched);
    CHECK(ood.exemplars.source_state == StateId{2});
    CHECK(ood.exemplars.dialogue_ids == std::vector<DialogueId>{1});
    CHECK_FALSE(ood.response.empty());

    auto snap = session.snapshot();
    REQUIRE(snap.history.size() == 6);
    CHECK(snap.history[5].text == ood.response);
    auto partial = session.partial_dialogue();
    CHECK(partial.utterances[2].synthetic);
    CHECK(partial.utterances[4].round == 2);
}

TEST_CASE("out-of-domain input at the start state")
{
    Toy toy;
    Session session("s", toy.automaton, toy.corpus);
    auto r = chat_step(session, "book NBA game tickets", toy.tagger, toy.canned);
    CHECK_FALSE(r.navigation.matched);
    CHECK(r.exemplars.source_state == StateId{0});
    CHECK(r.exemplars.dialogue_ids == std::vector<DialogueId>{1, 2, 3});
    CHECK(session.snapshot().current == StateId{0});
}

TEST_CASE("a failing generator leaves the session untouched")
{
    Toy toy;
    Session session("s", toy.automaton, toy.corpus);
    chat_step(session, "hi my battery drains", toy.tagger, toy.canned);
    const auto before = session.snapshot();
    ThrowingGenerator broken;
    CHECK_THROWS_AS(chat_step(session, "i want a refund", toy.tagger, broken), GeneratorError);
    const auto after = session.snapshot();
    CHECK(after.current == before.current);
    CHECK(after.last_valid == before.last_valid);
    CHECK(after.history.size() == before.history.size());
}

namespace {

class GateGenerator : public Generator {
  public:
    std::string generate(const GenerationRequest&) override
    {
        std::unique_lock lock(m);
        entered = true;
        cv.notify_all();
        cv.wait(lock, [this] { return released; });
        return "done";
    }
    std::mutex m;
    std::condition_variable cv;
    bool entered = false;
    bool released = false;
};

}  // namespace

TEST_CASE("a second step on a busy session is refused")
{
    Toy toy;
    Session session("s", toy.automaton, toy.corpus);
    GateGenerator gate;
    std::thread worker([&] { chat_step(session, "hi", toy.tagger, gate); });
    {
        std::unique_lock lock(gate.m);
        gate.cv.wait(lock, [&] { return gate.entered; });
    }
    CHECK_THROWS_AS(chat_step(session, "hi", toy.tagger, toy.canned), SessionBusyError);
    {
        std::lock_guard lock(gate.m);
        gate.released = true;
    }
    gate.cv.notify_all();
    worker.join();
    CHECK(session.snapshot().history.size() == 2);
}

namespace {

struct Recorded {
    std::vector<std::uint32_t> states;
    std::vector<std::vector<DialogueId>> exemplars;
    std::vector<std::string> responses;
    bool operator==(const Recorded&) const = default;
};

Recorded play(const std::shared_ptr<const Automaton>& a, const std::shared_ptr<const Corpus>& corpus,
              const std::vector<std::string>& inputs, std::uint64_t seed, std::size_t k, const Tagger& tagger,
              Generator& generator)
{
    Session session("r", a, corpus, SessionOptions{seed, k, SamplingMode::seeded});
    Recorded r;
    for (const auto& text : inputs) {
        auto step = chat_step(session, text, tagger, generator);
        r.states.push_back(step.navigation.state.value);
        r.states.push_back(session.snapshot().current.value);
        r.exemplars.push_back(step.exemplars.dialogue_ids);
        r.responses.push_back(step.response);
        REQUIRE(!step.exemplars.dialogue_ids.empty());
        REQUIRE(step.exemplars.dialogue_ids.size() <= std::min<std::size_t>(k, 5));
        for (auto id : step.exemplars.dialogue_ids) {
            REQUIRE(a->state(step.exemplars.source_state).dialogue_ids.count(id) == 1);
        }
    }
    return r;
}

}  // namespace

TEST_CASE("replaying a recorded session reproduces it exactly")
{
    Rng rng(404);
    Lexicon lexicon;
    for (char c = 'a'; c < 'g'; ++c) {
        lexicon.emplace(std::string("w") + c, Tag(std::string(1, c)));
    }
    KeywordTagger tagger(lexicon);
    for (int trial = 0; trial < 200; ++trial) {
        // Corpus whose words spell out the table's tags, so tagging it back gives the table.
        auto table = testsupport::random_table(rng, 12, 4, 6);
        std::vector<Dialogue> ds;
        for (auto id : table.dialogue_ids()) {
            Dialogue d{id, {}};
            for (const auto& stage : table.stages()) {
                const auto* ts = table.tags(stage.round, stage.role, id);
                if (ts == nullptr) {
                    continue;
                }
                std::string text = "filler";
                for (const auto& t : *ts) {
                    text += " w" + t.str();
                }
                d.utterances.push_back(Utterance{stage.role, text, stage.round, false});
            }
            ds.push_back(d);
        }
        auto corpus = std::make_shared<const Corpus>(ds);
        auto a = std::make_shared<const Automaton>(build_automaton(table, BuildConfig{rng.below(3)}));

        CannedGenerator canned;
        canned.set_default("fallback");
        for (std::size_t i = 0; i < a->size(); i += 3) {
            canned.set_state_response(StateId{static_cast<std::uint32_t>(i)}, "reply " + std::to_string(i));
        }
        std::vector<std::string> inputs;
        const auto turns = 1 + rng.below(5);
        for (std::uint64_t t = 0; t < turns; ++t) {
            std::string text;
            const auto words = rng.below(4);
            for (std::uint64_t w = 0; w < words; ++w) {
                text += " w" + std::string(1, static_cast<char>('a' + rng.below(7)));
            }
            inputs.push_back(text);
        }
        const auto seed = rng.next();
        const auto k = 1 + rng.below(5);
        INFO("trial " << trial);
        auto first = play(a, corpus, inputs, seed, k, tagger, canned);
        auto second = play(a, corpus, inputs, seed, k, tagger, canned);
        REQUIRE(first == second);
        ExemplarReplayGenerator replay;
        REQUIRE(play(a, corpus, inputs, seed, k, tagger, replay) == play(a, corpus, inputs, seed, k, tagger, replay));
    }
}
