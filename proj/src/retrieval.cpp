#include "trove/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace trove {

std::string_view to_string(RetrieverKind kind) {
    switch (kind) {
        case RetrieverKind::BM25: return "bm25";
        case RetrieverKind::Dense: return "dense";
        case RetrieverKind::LCS: return "lcs";
    }
    return "bm25";
}

RetrieverKind retriever_from_string(std::string_view s) {
    if (s == "bm25") return RetrieverKind::BM25;
    if (s == "dense") return RetrieverKind::Dense;
    if (s == "lcs") return RetrieverKind::LCS;
    throw std::runtime_error("unknown retriever \"" + std::string(s) +
                             "\" (expected bm25, dense, or lcs)");
}

std::vector<SentenceRef> CandidateSet::voted_refs() const {
    std::vector<SentenceRef> refs;
    refs.reserve(voted.size());
    for (const auto& c : voted) refs.push_back(c.ref);
    return refs;
}

SentenceIndex build_index(const Example& example) {
    SentenceIndex index;
    index.language = example.language;
    for (int d = 0; d < static_cast<int>(example.documents.size()); ++d) {
        const auto& doc = example.documents[d];
        for (int s = 0; s < static_cast<int>(doc.sentences.size()); ++s) {
            index.refs.push_back({d, s});
            index.texts.push_back(doc.sentences[s]);
            index.tokens.push_back(tokenize(doc.sentences[s], example.language));
        }
    }
    if (index.refs.empty()) {
        throw std::runtime_error("example \"" + example.id + "\" has no source sentences");
    }
    std::size_t total_len = 0;
    for (const auto& toks : index.tokens) {
        total_len += toks.size();
        std::set<std::string_view> distinct(toks.begin(), toks.end());
        for (auto t : distinct) ++index.df[std::string(t)];
    }
    index.avg_len = static_cast<double>(total_len) / static_cast<double>(index.refs.size());
    return index;
}

namespace {

int index_position(const SentenceIndex& index, SentenceRef ref) {
    auto it = std::lower_bound(index.refs.begin(), index.refs.end(), ref);
    if (it == index.refs.end() || *it != ref) {
        throw std::runtime_error("sentence (" + std::to_string(ref.doc_idx) + ", " +
                                 std::to_string(ref.sent_idx) + ") not in index");
    }
    return static_cast<int>(it - index.refs.begin());
}

double bm25_for_tokens(const SentenceIndex& index, const std::vector<std::string>& query_tokens,
                       const std::vector<std::string>& cand_tokens, const RetrievalConfig& cfg) {
    if (index.avg_len <= 0.0) return 0.0;
    const double n = static_cast<double>(index.size());
    const double len = static_cast<double>(cand_tokens.size());
    std::map<std::string_view, int> tf;
    for (const auto& t : cand_tokens) ++tf[t];

    std::set<std::string_view> terms(query_tokens.begin(), query_tokens.end());
    double score = 0.0;
    for (auto term : terms) {
        auto tf_it = tf.find(term);
        if (tf_it == tf.end()) continue;
        auto df_it = index.df.find(std::string(term));
        const double df = df_it == index.df.end() ? 0.0 : df_it->second;
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        const double freq = tf_it->second;
        const double denom =
            freq + cfg.bm25_k1 * (1.0 - cfg.bm25_b + cfg.bm25_b * len / index.avg_len);
        score += idf * freq * (cfg.bm25_k1 + 1.0) / denom;
    }
    return score;
}

std::vector<ScoredRef> top_k(std::vector<ScoredRef> scored, int k) {
    std::sort(scored.begin(), scored.end(), [](const ScoredRef& a, const ScoredRef& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.ref < b.ref;
    });
    if (static_cast<int>(scored.size()) > k) scored.resize(k);
    return scored;
}

}  // namespace

double score_bm25(const SentenceIndex& index, const std::vector<std::string>& query_tokens,
                  SentenceRef candidate, const RetrievalConfig& config) {
    int pos = index_position(index, candidate);
    return bm25_for_tokens(index, query_tokens, index.tokens[pos], config);
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    const std::size_t m = b.size();
    std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double score_lcs(const std::vector<std::string>& query_tokens,
                 const std::vector<std::string>& candidate_tokens) {
    const double denom = std::max<std::size_t>(1, query_tokens.size());
    return lcs_length(query_tokens, candidate_tokens) / denom;
}

double score_dense(const std::vector<double>& query_vec, const std::vector<double>& candidate_vec) {
    if (query_vec.size() != candidate_vec.size()) {
        throw std::runtime_error("embedding dimension mismatch: " +
                                 std::to_string(query_vec.size()) + " vs " +
                                 std::to_string(candidate_vec.size()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < query_vec.size(); ++i) dot += query_vec[i] * candidate_vec[i];
    return dot;
}

std::vector<ScoredRef> retrieve_topk(const SentenceIndex& index, const std::string& target,
                                     RetrieverKind kind, const RetrievalConfig& config,
                                     EmbeddingProvider* embedder) {
    if (index.size() == 0) throw std::runtime_error("retrieve_topk: empty index");
    std::vector<ScoredRef> scored;
    scored.reserve(index.refs.size());
    switch (kind) {
        case RetrieverKind::BM25: {
            auto query = tokenize(target, index.language);
            for (int i = 0; i < index.size(); ++i) {
                scored.push_back(
                    {index.refs[i], bm25_for_tokens(index, query, index.tokens[i], config)});
            }
            break;
        }
        case RetrieverKind::LCS: {
            auto query = tokenize(target, index.language);
            for (int i = 0; i < index.size(); ++i) {
                scored.push_back({index.refs[i], score_lcs(query, index.tokens[i])});
            }
            break;
        }
        case RetrieverKind::Dense: {
            if (embedder == nullptr) {
                throw std::runtime_error("dense retrieval needs an embedding provider");
            }
            auto query_vec = embedder->embed({target}).at(0);
            auto sentence_vecs = embedder->embed(index.texts);
            for (int i = 0; i < index.size(); ++i) {
                scored.push_back({index.refs[i], score_dense(query_vec, sentence_vecs[i])});
            }
            break;
        }
    }
    return top_k(std::move(scored), config.k);
}

std::vector<VotedCandidate> vote_candidates(
    const std::map<RetrieverKind, std::vector<ScoredRef>>& per_retriever,
    const RetrievalConfig& config) {
    std::map<SentenceRef, VotedCandidate> tally;
    for (const auto& [kind, list] : per_retriever) {
        (void)kind;
        for (int rank = 0; rank < static_cast<int>(list.size()); ++rank) {
            auto [it, inserted] = tally.try_emplace(list[rank].ref,
                                                    VotedCandidate{list[rank].ref, 0, rank});
            ++it->second.votes;
            if (!inserted) it->second.best_rank = std::min(it->second.best_rank, rank);
        }
    }
    // fewer lists than the threshold: plain union
    const bool fallback = static_cast<int>(per_retriever.size()) < config.vote_threshold;
    std::vector<VotedCandidate> voted;
    for (const auto& [ref, cand] : tally) {
        (void)ref;
        if (fallback || cand.votes >= config.vote_threshold) voted.push_back(cand);
    }
    std::sort(voted.begin(), voted.end(), [](const VotedCandidate& a, const VotedCandidate& b) {
        if (a.votes != b.votes) return a.votes > b.votes;
        if (a.best_rank != b.best_rank) return a.best_rank < b.best_rank;
        return a.ref < b.ref;
    });
    return voted;
}

CandidateSet retrieve_candidates(const SentenceIndex& index, int target_idx,
                                 const std::string& target, const RetrievalConfig& config,
                                 EmbeddingProvider* embedder) {
    CandidateSet set;
    set.target_idx = target_idx;
    for (RetrieverKind kind : config.active) {
        set.per_retriever[kind] = retrieve_topk(index, target, kind, config, embedder);
    }
    set.voted = vote_candidates(set.per_retriever, config);
    return set;
}

}  // namespace trove
