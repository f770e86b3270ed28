#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "trove/corpus.hpp"
#include "trove/providers.hpp"

namespace trove {

enum class RetrieverKind { BM25, Dense, LCS };

std::string_view to_string(RetrieverKind kind);
RetrieverKind retriever_from_string(std::string_view s);

struct RetrievalConfig {
    int k = 10;
    int vote_threshold = 2;
    double bm25_k1 = 1.2;
    double bm25_b = 0.75;
    std::vector<RetrieverKind> active{RetrieverKind::BM25, RetrieverKind::Dense,
                                      RetrieverKind::LCS};
};

/// Flat sentence-level index over one example's documents, in
/// (doc_idx, sent_idx) order. Document frequencies and average length are
/// computed over sentences.
struct SentenceIndex {
    Language language = Language::EN;
    std::vector<SentenceRef> refs;
    std::vector<std::string> texts;
    std::vector<std::vector<std::string>> tokens;
    std::unordered_map<std::string, int> df;
    double avg_len = 0.0;

    int size() const { return static_cast<int>(refs.size()); }
};

struct ScoredRef {
    SentenceRef ref;
    double score = 0.0;
    bool operator==(const ScoredRef&) const = default;
};

struct VotedCandidate {
    SentenceRef ref;
    int votes = 0;
    int best_rank = 0;
    bool operator==(const VotedCandidate&) const = default;
};

/// Per-target retrieval output: each retriever's top-k plus the voted union.
struct CandidateSet {
    int target_idx = 0;
    std::map<RetrieverKind, std::vector<ScoredRef>> per_retriever;
    std::vector<VotedCandidate> voted;

    std::vector<SentenceRef> voted_refs() const;
};

SentenceIndex build_index(const Example& example);

/// Okapi BM25 score of one candidate sentence against the query term set:
///   sum over distinct query terms of idf(t) * tf*(k1+1) / (tf + k1*(1-b+b*len/avg_len))
/// with idf(t) = ln((N - df + 0.5)/(df + 0.5) + 1).
double score_bm25(const SentenceIndex& index, const std::vector<std::string>& query_tokens,
                  SentenceRef candidate, const RetrievalConfig& config);

/// Length of the longest common subsequence (classic O(n*m) dynamic program).
int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// |LCS(query, candidate)| / max(1, |query|), in [0, 1].
double score_lcs(const std::vector<std::string>& query_tokens,
                 const std::vector<std::string>& candidate_tokens);

/// Cosine similarity of two unit vectors (their dot product).
double score_dense(const std::vector<double>& query_vec, const std::vector<double>& candidate_vec);

/// Top min(k, N) sentences for one target, sorted by (score desc, ref asc).
/// Dense retrieval embeds the target and every sentence through `embedder`.
std::vector<ScoredRef> retrieve_topk(const SentenceIndex& index, const std::string& target,
                                     RetrieverKind kind, const RetrievalConfig& config,
                                     EmbeddingProvider* embedder);

/// Keeps sentences recalled by at least `vote_threshold` retrievers; falls
/// back to the plain union when fewer lists than the threshold exist.
/// Ordered by (votes desc, best rank asc, ref asc).
std::vector<VotedCandidate> vote_candidates(
    const std::map<RetrieverKind, std::vector<ScoredRef>>& per_retriever,
    const RetrievalConfig& config);

/// Runs every active retriever for one target and votes the results.
CandidateSet retrieve_candidates(const SentenceIndex& index, int target_idx,
                                 const std::string& target, const RetrievalConfig& config,
                                 EmbeddingProvider* embedder);

}  // namespace trove
