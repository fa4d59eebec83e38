#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dfarag/corpus.hpp"
#include "dfarag/llm_client.hpp"

namespace dfarag {

/// min(k, N) distinct ids drawn uniformly with the seeded generator,
/// returned in ascending order.
std::vector<DialogueId> retrieve_random(const Corpus& corpus, std::size_t k, std::uint64_t seed);

/// All non-synthetic utterances joined by spaces.
std::string dialogue_document(const Dialogue& dialogue);

enum class QueryScope { full_dialogue, last_utterance };

/// Retrieval query for a partial dialogue.
std::string query_text(const Dialogue& partial, QueryScope scope = QueryScope::full_dialogue);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Okapi BM25 over whole dialogues, idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).
class Bm25Index {
  public:
    explicit Bm25Index(const Corpus& corpus, Bm25Params params = {});

    /// One score per indexed dialogue, in corpus order. Repeated query
    /// terms count once per occurrence.
    std::vector<double> score_all(std::string_view query) const;

    /// Dialogues with a positive score, best first, ties by ascending id,
    /// at most k. Empty for a query without terms.
    std::vector<std::pair<DialogueId, double>> retrieve(std::string_view query, std::size_t k) const;

    double idf(const std::string& term) const;
    std::size_t document_frequency(const std::string& term) const;
    std::size_t document_count() const noexcept { return ids_.size(); }
    double average_length() const noexcept { return avg_len_; }
    const std::vector<DialogueId>& ids() const noexcept { return ids_; }
    const Bm25Params& params() const noexcept { return params_; }

  private:
    // Per-term postings in structure-of-arrays form so the weight kernel
    // runs over contiguous memory.
    struct Postings {
        std::vector<std::uint32_t> docs;
        std::vector<double> tf;
        std::vector<double> norm;
    };

    Bm25Params params_;
    std::vector<DialogueId> ids_;
    std::vector<std::size_t> lengths_;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, Postings> postings_;
};

std::vector<std::pair<DialogueId, double>> bm25_retrieve(const Bm25Index& index, std::string_view query,
                                                         std::size_t k);

/// Cosine top-k over per-dialogue embeddings, computed once at construction.
class EmbeddingIndex {
  public:
    EmbeddingIndex(EmbeddingClient& client, const Corpus& corpus);
    EmbeddingIndex(std::vector<DialogueId> ids, std::vector<std::vector<float>> vectors);

    /// Best first, ties by ascending id.
    std::vector<std::pair<DialogueId, double>> rank(const std::vector<float>& query, std::size_t k) const;

  private:
    std::vector<DialogueId> ids_;
    std::vector<std::vector<float>> vectors_;
};

/// Throws UnsupportedStrategyError when `client` is null.
std::vector<DialogueId> embedding_retrieve(EmbeddingClient* client, const Corpus& corpus, const std::string& query,
                                           std::size_t k);

}  // namespace dfarag
