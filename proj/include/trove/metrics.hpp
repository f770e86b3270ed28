#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trove/corpus.hpp"

namespace trove {

/// TP / predicted / gold tallies for one target sentence (or a sum of them).
struct PairCounts {
    long long tp = 0;
    long long pred = 0;
    long long gold = 0;

    PairCounts& operator+=(const PairCounts& other) {
        tp += other.tp;
        pred += other.pred;
        gold += other.gold;
        return *this;
    }
    bool operator==(const PairCounts&) const = default;
};

/// Track: a predicted pair matches gold on the source sentence alone.
/// Relation: it must also carry the same relation.
enum class MatchMode { Track, Relation };

/// One example's paired prediction/gold links. n_targets is the number of
/// target sentences; targets with links on neither side still enter the
/// macro average (as P = R = 1).
struct ExamplePair {
    std::string id;
    int n_targets = 0;
    std::vector<ProvenanceLink> pred;
    std::vector<ProvenanceLink> gold;
};

PairCounts match_pairs(const std::vector<ProvenanceLink>& pred,
                       const std::vector<ProvenanceLink>& gold, int target_idx, MatchMode mode);

/// Precision/recall from counts with the empty-side convention:
/// both sides empty -> P = R = 1; a zero-denominator ratio is otherwise 0.
std::pair<double, double> precision_recall(const PairCounts& counts);

/// Per-sentence P/R averaged within each example, then unweighted across
/// examples.
std::pair<double, double> macro_metrics(const std::vector<ExamplePair>& examples, MatchMode mode);

/// Counts summed over each example's target sentences, P/R per example,
/// then unweighted across examples.
std::pair<double, double> micro_metrics(const std::vector<ExamplePair>& examples, MatchMode mode);

/// Alternative pooling: counts summed over the whole dataset.
std::pair<double, double> micro_metrics_global(const std::vector<ExamplePair>& examples,
                                               MatchMode mode);

/// 2pr/(p+r), or 0 when p + r = 0.
double f1_score(double p, double r);

/// The 13-metric suite for one slice of the data.
struct MetricValues {
    double macro_track_p = 0, macro_track_r = 0, macro_track_f1 = 0;
    double micro_track_p = 0, micro_track_r = 0, micro_track_f1 = 0;
    double macro_relation_p = 0, macro_relation_r = 0, macro_relation_f1 = 0;
    double micro_relation_p = 0, micro_relation_r = 0, micro_relation_f1 = 0;
    double overall_f1 = 0;
    std::size_t n_examples = 0;
};

MetricValues compute_metric_values(const std::vector<ExamplePair>& examples, bool global_micro);

/// Example plus the grouping keys used for report breakdowns.
struct ScoredExample {
    ExamplePair pair;
    std::string scenario;
    std::string language;
    std::string length_bucket;
    std::string doc_class;
};

/// Overall metrics plus breakdowns by scenario / language / length bucket /
/// doc class. `aggregation` records how micro metrics were pooled.
struct MetricReport {
    std::string aggregation;  // "per-example" or "global-micro"
    MetricValues overall;
    std::map<std::string, std::map<std::string, MetricValues>> breakdowns;
};

MetricReport compute_report(const std::vector<ScoredExample>& examples, bool global_micro);

/// Fleiss' kappa input: counts[item][category] = number of annotators who
/// assigned that category; every row sums to `annotators`.
struct AnnotationMatrix {
    int annotators = 0;
    std::vector<std::vector<int>> counts;
};

/// kappa = (Pbar - PbarE) / (1 - PbarE) with
///   P_i = (sum_c counts[i][c]^2 - n) / (n(n-1)), PbarE = sum_c p_c^2.
/// All mass in one category gives kappa = 1; an empty matrix is an error.
double fleiss_kappa(const AnnotationMatrix& matrix);

/// The three agreement matrices over >= 2 annotators' label sets:
/// trace (binary, union of claimed pairs), type (4 relation categories over
/// pairs traced by everyone), correction (binary per target; absent unless
/// every record carries `modified` flags).
struct AgreementMatrices {
    AnnotationMatrix trace;
    AnnotationMatrix type;
    std::optional<AnnotationMatrix> correction;
};

AgreementMatrices build_agreement_matrices(
    const std::vector<std::vector<AnnotationRecord>>& annotators);

}  // namespace trove
