#include <doctest.h>

#include <chrono>
#include <cmath>
#include <functional>

#include "dfarag/baselines.hpp"
#include "support/support.hpp"

using namespace dfarag;

namespace {

Corpus docs_corpus(const std::vector<std::string>& texts)
{
    std::vector<Dialogue> ds;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        ds.push_back(Dialogue{i, {Utterance{Role::user, texts[i], 0, false}}});
    }
    return Corpus(std::move(ds));
}

std::vector<std::string> split(const std::string& s)
{
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

class StubEmbeddings : public EmbeddingClient {
  public:
    std::map<std::string, std::vector<float>> table;
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override
    {
        std::vector<std::vector<float>> out;
        for (const auto& t : texts) {
            out.push_back(table.at(t));
        }
        return out;
    }
};

}  // namespace

TEST_CASE("retrieve_random")
{
    auto three = docs_corpus({"a", "b", "c"});
    CHECK(retrieve_random(three, 5, 1) == std::vector<DialogueId>{0, 1, 2});
    CHECK(retrieve_random(Corpus{}, 5, 1).empty());

    std::vector<std::string> texts(100, "x");
    auto hundred = docs_corpus(texts);
    auto first = retrieve_random(hundred, 5, 42);
    CHECK(first.size() == 5);
    CHECK(first == retrieve_random(hundred, 5, 42));
    CHECK(std::is_sorted(first.begin(), first.end()));
    CHECK(std::set<DialogueId>(first.begin(), first.end()).size() == 5);
    CHECK(first != retrieve_random(hundred, 5, 43));
}

TEST_CASE("bm25 two-document example")
{
    auto corpus = docs_corpus({"battery drains fast", "screen cracked"});
    Bm25Index index(corpus);
    // Textbook: N=2, df=1, idf=ln(1+1.5/1.5)=ln 2; avgdl=2.5, doc 0 has dl=3, tf=1.
    const double idf = std::log(2.0);
    const double want = idf * 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 3.0 / 2.5));
    auto ranked = bm25_retrieve(index, "battery", 5);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].first == 0);
    CHECK(std::fabs(ranked[0].second - want) < 1e-12);
    CHECK(bm25_retrieve(index, "", 5).empty());
    CHECK(bm25_retrieve(index, "keyboard", 5).empty());
    CHECK(index.score_all("battery keyboard") == index.score_all("battery"));
}

TEST_CASE("bm25 ties go to the smaller id")
{
    auto corpus = docs_corpus({"other words", "battery low", "battery low"});
    auto ranked = bm25_retrieve(Bm25Index(corpus), "battery", 5);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].second == ranked[1].second);
    CHECK(ranked[0].first == 1);
    CHECK(ranked[1].first == 2);
}

TEST_CASE("bm25 equals the brute-force oracle on every small corpus")
{
    // Documents: every multiset of one or two words over {a, b, c}. Corpora:
    // every multiset of 1 to 10 such documents (scores do not depend on order).
    const std::vector<std::string> doc_types{"a", "b", "c", "a a", "a b", "a c", "b b", "b c", "c c"};
    const std::vector<std::string> queries{"a", "b", "c", "a b", "a a", "c b a", "zzz", "a zzz"};
    const auto start = std::chrono::steady_clock::now();
    std::size_t corpora = 0;
    double worst = 0.0;
    std::vector<std::size_t> pick;  // nondecreasing indices into doc_types
    std::function<void(std::size_t)> rec = [&](std::size_t from) {
        if (!pick.empty()) {
            std::vector<std::string> texts;
            std::vector<std::vector<std::string>> tokens;
            for (auto i : pick) {
                texts.push_back(doc_types[i]);
                tokens.push_back(split(doc_types[i]));
            }
            Bm25Index index(docs_corpus(texts));
            for (const auto& q : queries) {
                auto got = index.score_all(q);
                auto want = testsupport::brute_bm25(tokens, split(q));
                for (std::size_t i = 0; i < got.size(); ++i) {
                    worst = std::max(worst, std::fabs(got[i] - want[i]));
                }
            }
            ++corpora;
        }
        if (pick.size() == 10) {
            return;
        }
        for (std::size_t i = from; i < doc_types.size(); ++i) {
            pick.push_back(i);
            rec(i);
            pick.pop_back();
        }
    };
    rec(0);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    MESSAGE("corpora: " << corpora << ", max |error|: " << worst << ", seconds: "
                        << std::chrono::duration<double>(elapsed).count());
    CHECK(corpora == 92377);
    CHECK(worst <= 1e-9);
    CHECK(elapsed < std::chrono::seconds(10));
}

TEST_CASE("bm25 ranking matches the oracle order")
{
    Rng rng(3);
    const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> texts;
        std::vector<std::vector<std::string>> tokens;
        const auto n = 1 + rng.below(10);
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string t;
            std::vector<std::string> toks;
            const auto len = 1 + rng.below(5);
            for (std::uint64_t j = 0; j < len; ++j) {
                toks.push_back(vocab[rng.below(vocab.size())]);
                t += (j ? " " : "") + toks.back();
            }
            texts.push_back(t);
            tokens.push_back(toks);
        }
        const std::string q = vocab[rng.below(5)] + " " + vocab[rng.below(5)];
        auto want = testsupport::brute_bm25(tokens, split(q));
        std::vector<std::pair<DialogueId, double>> order;
        for (std::size_t i = 0; i < want.size(); ++i) {
            if (want[i] > 0) {
                order.emplace_back(i, want[i]);
            }
        }
        std::stable_sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
            return x.second > y.second + 1e-12;
        });
        auto got = bm25_retrieve(Bm25Index(docs_corpus(texts)), q, 3);
        REQUIRE(got.size() == std::min<std::size_t>(3, order.size()));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::fabs(got[i].second - order[i].second) < 1e-9);
        }
    }
}

TEST_CASE("query text")
{
    Dialogue d{0,
               {Utterance{Role::user, "", 0, true}, Utterance{Role::system, "welcome", 0, false},
                Utterance{Role::user, "battery dies", 1, false}}};
    CHECK(query_text(d) == "welcome battery dies");
    CHECK(query_text(d, QueryScope::last_utterance) == "battery dies");
    CHECK(dialogue_document(d) == "welcome battery dies");
}

TEST_CASE("embedding retrieval")
{
    StubEmbeddings client;
    client.table = {{"d0", {1, 0, 0}}, {"d1", {1, 1, 0}}, {"d2", {0, 1, 0}}, {"q", {1, 0, 0}}};
    auto corpus = docs_corpus({"d0", "d1", "d2"});
    // cos(q,d0)=1, cos(q,d1)=1/sqrt2, cos(q,d2)=0.
    CHECK(embedding_retrieve(&client, corpus, "q", 3) == std::vector<DialogueId>{0, 1, 2});
    CHECK(embedding_retrieve(&client, corpus, "q", 1) == std::vector<DialogueId>{0});
    CHECK_THROWS_AS(embedding_retrieve(nullptr, corpus, "q", 3), UnsupportedStrategyError);

    EmbeddingIndex index({7, 8}, {{0, 1}, {1, 0}});
    auto ranked = index.rank({0, 1}, 2);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].first == 7);
    CHECK(ranked[0].second == doctest::Approx(1.0));
    CHECK(ranked[1].second == 0.0);
}
