#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trove {

enum class Language { EN, ZH };

/// How a target sentence uses a source sentence.
enum class RelationType { Quotation, Compression, Inference, Other };

enum class LengthBucket { B0_5K, B5_10K, B10K_PLUS };
enum class DocClass { Single, Multi };

/// Positional identity of one source sentence: (document index, sentence index).
/// Ordered lexicographically.
struct SentenceRef {
    int doc_idx = 0;
    int sent_idx = 0;
    auto operator<=>(const SentenceRef&) const = default;
};

struct Document {
    std::string raw_text;
    std::vector<std::string> sentences;
    Language language = Language::EN;
    bool operator==(const Document&) const = default;
};

/// One (target sentence, source sentence, relation) claim.
/// Within a prediction or gold set, (target_idx, source) pairs are unique.
struct ProvenanceLink {
    int target_idx = 0;
    SentenceRef source;
    RelationType relation = RelationType::Other;
    auto operator<=>(const ProvenanceLink&) const = default;
};

/// One benchmark sample: source documents, target sentences, optional gold links.
struct Example {
    std::string id;
    Language language = Language::EN;
    std::string scenario;
    std::vector<Document> documents;
    std::vector<std::string> targets;
    std::optional<std::vector<ProvenanceLink>> gold;
    LengthBucket length_bucket = LengthBucket::B0_5K;
    DocClass doc_class = DocClass::Single;

    bool operator==(const Example&) const = default;

    std::size_t total_sentences() const;
    bool contains(SentenceRef ref) const;
    const std::string& sentence_text(SentenceRef ref) const;
};

std::string_view to_string(Language lang);
std::string_view to_string(RelationType rel);
std::string_view to_string(LengthBucket bucket);
std::string_view to_string(DocClass cls);
Language language_from_string(std::string_view s);
RelationType relation_from_string(std::string_view s);

/// Deterministic sentence segmentation.
/// EN splits after `.`/`!`/`?` followed by whitespace and an uppercase letter
/// or opening quote, guarded by a fixed abbreviation list. ZH splits after
/// 。／！／？／； and any closing quotes/brackets that follow them. The
/// trailing fragment is kept as the final sentence. Joining the result
/// preserves every non-whitespace character of the input in order.
std::vector<std::string> segment_sentences(std::string_view text, Language language);

/// EN: lowercased alphanumeric runs, punctuation dropped.
/// ZH: one token per non-whitespace code point.
std::vector<std::string> tokenize(std::string_view sentence, Language language);

/// Text length for bucketing: whitespace-separated words (EN) or
/// non-whitespace code points (ZH).
std::size_t text_length_units(std::string_view text, Language language);

/// (length bucket, doc class) for a segmented example. Buckets are
/// [0,5000), [5000,10000), [10000,inf) summed over all documents.
std::pair<LengthBucket, DocClass> bucketize_example(const Example& example);

/// Loads a JSONL dataset, one example per line:
///   {"id": str, "language": "en"|"zh", "scenario": str,
///    "documents": [{"text": str} | {"sentences": [str,...]}],
///    "targets": [str,...],
///    "gold": [{"target_idx": int, "doc_idx": int, "sent_idx": int,
///              "relation": "quotation"|...}, ...]?}
/// Documents without pre-segmented sentences are segmented on load.
/// Malformed lines raise errors naming the line number; out-of-range gold
/// indices raise errors naming the example id.
std::vector<Example> load_dataset(const std::string& path);

/// Writes examples back as JSONL; documents carry both "text" and
/// "sentences", so load(save(load(x))) == load(x).
void save_dataset(const std::vector<Example>& examples, const std::string& path);

/// One line of a prediction file: {"id", "method", "links", "warnings", "chat_calls"}.
struct PredictionRecord {
    std::string id;
    std::string method;
    std::vector<ProvenanceLink> links;
    int warnings = 0;
    int chat_calls = 0;
    bool operator==(const PredictionRecord&) const = default;
};

std::vector<PredictionRecord> load_predictions(const std::string& path);
void save_predictions(const std::vector<PredictionRecord>& records, const std::string& path);

/// One annotator's labels for one example; `modified` flags (one per target
/// sentence) record whether the annotator corrected the machine output.
struct AnnotationRecord {
    std::string id;
    std::vector<ProvenanceLink> links;
    std::optional<std::vector<bool>> modified;
};

std::vector<AnnotationRecord> load_annotations(const std::string& path);

}  // namespace trove
