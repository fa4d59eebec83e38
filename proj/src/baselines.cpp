#include "dfarag/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "dfarag/kernels.hpp"
#include "dfarag/tag.hpp"

namespace dfarag {

namespace {

template <typename Scored>
void sort_best_first(std::vector<Scored>& items)
{
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
}

}  // namespace

std::vector<DialogueId> retrieve_random(const Corpus& corpus, std::size_t k, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<DialogueId> out;
    for (auto i : rng.sample_indices(corpus.size(), k)) {
        out.push_back(corpus.dialogues()[i].id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string dialogue_document(const Dialogue& dialogue)
{
    std::string doc;
    for (const auto& u : dialogue.utterances) {
        if (u.synthetic || u.text.empty()) {
            continue;
        }
        if (!doc.empty()) {
            doc.push_back(' ');
        }
        doc += u.text;
    }
    return doc;
}

std::string query_text(const Dialogue& partial, QueryScope scope)
{
    if (scope == QueryScope::full_dialogue) {
        return dialogue_document(partial);
    }
    for (auto it = partial.utterances.rbegin(); it != partial.utterances.rend(); ++it) {
        if (!it->synthetic && !it->text.empty()) {
            return it->text;
        }
    }
    return {};
}

Bm25Index::Bm25Index(const Corpus& corpus, Bm25Params params) : params_(params)
{
    std::size_t total = 0;
    std::vector<std::unordered_map<std::string, std::size_t>> counts;
    for (const auto& d : corpus.dialogues()) {
        ids_.push_back(d.id);
        auto words = tokenize_words(dialogue_document(d));
        lengths_.push_back(words.size());
        total += words.size();
        auto& tf = counts.emplace_back();
        for (auto& w : words) {
            ++tf[w];
        }
    }
    avg_len_ = ids_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(ids_.size());
    for (std::uint32_t doc = 0; doc < counts.size(); ++doc) {
        // Sorted terms keep posting order independent of hash iteration.
        std::vector<std::pair<std::string, std::size_t>> terms(counts[doc].begin(), counts[doc].end());
        std::sort(terms.begin(), terms.end());
        const double len_ratio = static_cast<double>(lengths_[doc]) / avg_len_;
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * len_ratio);
        for (const auto& [term, tf] : terms) {
            auto& p = postings_[term];
            p.docs.push_back(doc);
            p.tf.push_back(static_cast<double>(tf));
            p.norm.push_back(norm);
        }
    }
}

std::size_t Bm25Index::document_frequency(const std::string& term) const
{
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.docs.size();
}

double Bm25Index::idf(const std::string& term) const
{
    const auto n = static_cast<double>(ids_.size());
    const auto df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<double> Bm25Index::score_all(std::string_view query) const
{
    std::vector<double> scores(ids_.size(), 0.0);
    std::vector<double> weights;
    for (const auto& term : tokenize_words(query)) {
        auto it = postings_.find(term);
        if (it == postings_.end()) {
            continue;
        }
        const auto& p = it->second;
        weights.resize(p.docs.size());
        kernels::bm25_weights(p.tf, p.norm, idf(term) * (params_.k1 + 1.0), weights);
        for (std::size_t j = 0; j < p.docs.size(); ++j) {
            scores[p.docs[j]] += weights[j];
        }
    }
    return scores;
}

std::vector<std::pair<DialogueId, double>> Bm25Index::retrieve(std::string_view query, std::size_t k) const
{
    auto scores = score_all(query);
    std::vector<std::pair<DialogueId, double>> ranked;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > 0.0) {
            ranked.emplace_back(ids_[i], scores[i]);
        }
    }
    sort_best_first(ranked);
    if (ranked.size() > k) {
        ranked.resize(k);
    }
    return ranked;
}

std::vector<std::pair<DialogueId, double>> bm25_retrieve(const Bm25Index& index, std::string_view query,
                                                         std::size_t k)
{
    return index.retrieve(query, k);
}

EmbeddingIndex::EmbeddingIndex(EmbeddingClient& client, const Corpus& corpus)
{
    std::vector<std::string> docs;
    for (const auto& d : corpus.dialogues()) {
        ids_.push_back(d.id);
        docs.push_back(dialogue_document(d));
    }
    if (!docs.empty()) {
        vectors_ = client.embed(docs);
    }
    if (vectors_.size() != ids_.size()) {
        throw ServiceError("embedding client returned the wrong number of vectors");
    }
}

EmbeddingIndex::EmbeddingIndex(std::vector<DialogueId> ids, std::vector<std::vector<float>> vectors)
    : ids_(std::move(ids)), vectors_(std::move(vectors))
{
    if (ids_.size() != vectors_.size()) {
        throw std::invalid_argument("EmbeddingIndex: ids and vectors differ in length");
    }
}

std::vector<std::pair<DialogueId, double>> EmbeddingIndex::rank(const std::vector<float>& query, std::size_t k) const
{
    std::vector<std::pair<DialogueId, double>> ranked;
    ranked.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (vectors_[i].size() != query.size()) {
            throw ServiceError("embedding dimension mismatch for dialogue " + std::to_string(ids_[i]));
        }
        ranked.emplace_back(ids_[i], kernels::cosine(vectors_[i], query));
    }
    sort_best_first(ranked);
    if (ranked.size() > k) {
        ranked.resize(k);
    }
    return ranked;
}

std::vector<DialogueId> embedding_retrieve(EmbeddingClient* client, const Corpus& corpus, const std::string& query,
                                           std::size_t k)
{
    if (client == nullptr) {
        throw UnsupportedStrategyError("embedding retrieval needs a configured embedding client");
    }
    EmbeddingIndex index(*client, corpus);
    auto q = client->embed({query});
    if (q.size() != 1) {
        throw ServiceError("embedding client returned the wrong number of vectors");
    }
    std::vector<DialogueId> out;
    for (const auto& [id, score] : index.rank(q.front(), k)) {
        out.push_back(id);
    }
    return out;
}

}  // namespace dfarag
