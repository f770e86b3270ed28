#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trove/corpus.hpp"
#include "trove/providers.hpp"
#include "trove/retrieval.hpp"

namespace trove {

/// Fine-grained labels the model is asked for; mapped down to RelationType.
enum class PreLabel {
    Copy,
    Paraphrase,
    Reordering,
    Fusion,
    Summary,
    Distillation,
    Inference,
    Expansion,
    Generalization,
    Negation,
};

inline constexpr std::array<PreLabel, 10> kAllPreLabels = {
    PreLabel::Copy,         PreLabel::Paraphrase, PreLabel::Reordering,
    PreLabel::Fusion,       PreLabel::Summary,    PreLabel::Distillation,
    PreLabel::Inference,    PreLabel::Expansion,  PreLabel::Generalization,
    PreLabel::Negation,
};

/// Conflict resolution order when chunks disagree on a pair's relation:
/// the more literal relation wins.
inline constexpr std::array<RelationType, 4> kRelationPriority = {
    RelationType::Quotation, RelationType::Compression, RelationType::Inference,
    RelationType::Other};

std::string_view to_string(PreLabel label);
std::optional<PreLabel> prelabel_from_string(std::string_view s);  // case-insensitive

enum class TraceMethod { DP, RA };

std::string_view to_string(TraceMethod method);
TraceMethod trace_method_from_string(std::string_view s);

struct TraceConfig {
    TraceMethod method = TraceMethod::DP;
    int window_len = 4000;          // tokens per model call
    bool strict_candidates = true;  // RA: drop links outside the target's candidates
    RetrievalConfig retrieval;
};

/// One window of consecutive source sentences; chunks partition the source.
struct WindowChunk {
    int chunk_idx = 0;
    std::vector<std::pair<SentenceRef, std::string>> sentences;
};

struct TraceItem {
    int target_idx = 0;
    SentenceRef source;
    PreLabel label = PreLabel::Copy;
    bool operator==(const TraceItem&) const = default;
};

/// Well-formed claims recovered from one model reply; every dropped
/// malformed line or invalid reference increments parse_warnings.
struct RawTraceOutput {
    std::vector<TraceItem> items;
    int parse_warnings = 0;
};

struct TraceDiagnostics {
    int chat_calls = 0;
    int parse_warnings = 0;
    long long prompt_tokens = 0;  // rough whitespace-word estimate
};

struct TraceResult {
    std::vector<ProvenanceLink> links;
    TraceDiagnostics diagnostics;
};

/// Greedy sentence-aligned packing: consecutive sentences are added until
/// the next one would push the chunk past window_len tokens; a sentence
/// longer than the window becomes a singleton chunk.
std::vector<WindowChunk> chunk_source(const Example& example, const TraceConfig& config);

/// Deterministic prompt: instructions, the ten label definitions, source
/// sentences labeled D<doc+1>-<sent+1>, targets labeled T<idx+1>, and the
/// answer grammar `T<i> -> D<d>-<s> : <LABEL>`. EN/ZH instruction variants.
std::string build_prompt(const std::vector<std::pair<int, std::string>>& targets,
                         const std::vector<std::pair<SentenceRef, std::string>>& sources,
                         TraceMethod method, Language language);

/// Scans a reply for grammar lines (tolerating whitespace, markdown fences,
/// and surrounding emphasis); claims with unknown labels, unparseable or
/// out-of-set references, or out-of-range target ids are dropped and counted.
RawTraceOutput parse_model_output(const std::string& text, int n_targets,
                                  const std::set<SentenceRef>& valid_refs);

RelationType map_prelabel(PreLabel label);

/// Set-union over (target_idx, source) pairs; conflicting relations resolve
/// to the highest-priority one. Output sorted by (target_idx, source).
std::vector<ProvenanceLink> merge_chunk_predictions(
    const std::vector<std::vector<ProvenanceLink>>& per_chunk);

/// Full provenance for one example under the configured method.
/// DP: one chat call per window chunk, all targets per call.
/// RA: per-target retrieval + voting, targets batched so their candidate
/// text stays under window_len, one chat call per non-empty batch.
TraceResult trace_example(const Example& example, const TraceConfig& config, ChatProvider& chat,
                          EmbeddingProvider* embedder);

}  // namespace trove
