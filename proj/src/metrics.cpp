#include "trove/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace trove {

namespace {

using PairKey = std::pair<SentenceRef, int>;

PairKey key_for(const ProvenanceLink& link, MatchMode mode) {
    return {link.source, mode == MatchMode::Relation ? static_cast<int>(link.relation) : -1};
}

PairCounts example_counts(const ExamplePair& example, MatchMode mode) {
    PairCounts total;
    for (int t = 0; t < example.n_targets; ++t) {
        total += match_pairs(example.pred, example.gold, t, mode);
    }
    return total;
}

}  // namespace

PairCounts match_pairs(const std::vector<ProvenanceLink>& pred,
                       const std::vector<ProvenanceLink>& gold, int target_idx, MatchMode mode) {
    std::set<PairKey> pred_keys, gold_keys;
    for (const auto& link : pred) {
        if (link.target_idx == target_idx) pred_keys.insert(key_for(link, mode));
    }
    for (const auto& link : gold) {
        if (link.target_idx == target_idx) gold_keys.insert(key_for(link, mode));
    }
    PairCounts counts;
    counts.pred = static_cast<long long>(pred_keys.size());
    counts.gold = static_cast<long long>(gold_keys.size());
    for (const auto& key : pred_keys) counts.tp += gold_keys.count(key);
    return counts;
}

std::pair<double, double> precision_recall(const PairCounts& counts) {
    if (counts.pred == 0 && counts.gold == 0) return {1.0, 1.0};
    double p = counts.pred == 0 ? 0.0 : static_cast<double>(counts.tp) / counts.pred;
    double r = counts.gold == 0 ? 0.0 : static_cast<double>(counts.tp) / counts.gold;
    return {p, r};
}

std::pair<double, double> macro_metrics(const std::vector<ExamplePair>& examples, MatchMode mode) {
    if (examples.empty()) return {0.0, 0.0};
    double sum_p = 0.0, sum_r = 0.0;
    for (const auto& example : examples) {
        if (example.n_targets <= 0) {
            throw std::runtime_error("example \"" + example.id + "\" has no target sentences");
        }
        double ex_p = 0.0, ex_r = 0.0;
        for (int t = 0; t < example.n_targets; ++t) {
            auto [p, r] = precision_recall(match_pairs(example.pred, example.gold, t, mode));
            ex_p += p;
            ex_r += r;
        }
        sum_p += ex_p / example.n_targets;
        sum_r += ex_r / example.n_targets;
    }
    return {sum_p / examples.size(), sum_r / examples.size()};
}

std::pair<double, double> micro_metrics(const std::vector<ExamplePair>& examples, MatchMode mode) {
    if (examples.empty()) return {0.0, 0.0};
    double sum_p = 0.0, sum_r = 0.0;
    for (const auto& example : examples) {
        auto [p, r] = precision_recall(example_counts(example, mode));
        sum_p += p;
        sum_r += r;
    }
    return {sum_p / examples.size(), sum_r / examples.size()};
}

std::pair<double, double> micro_metrics_global(const std::vector<ExamplePair>& examples,
                                               MatchMode mode) {
    if (examples.empty()) return {0.0, 0.0};
    PairCounts total;
    for (const auto& example : examples) total += example_counts(example, mode);
    return precision_recall(total);
}

double f1_score(double p, double r) {
    double sum = p + r;
    return sum == 0.0 ? 0.0 : 2.0 * p * r / sum;
}

MetricValues compute_metric_values(const std::vector<ExamplePair>& examples, bool global_micro) {
    MetricValues v;
    v.n_examples = examples.size();
    std::tie(v.macro_track_p, v.macro_track_r) = macro_metrics(examples, MatchMode::Track);
    std::tie(v.macro_relation_p, v.macro_relation_r) = macro_metrics(examples, MatchMode::Relation);
    auto micro = global_micro ? micro_metrics_global : micro_metrics;
    std::tie(v.micro_track_p, v.micro_track_r) = micro(examples, MatchMode::Track);
    std::tie(v.micro_relation_p, v.micro_relation_r) = micro(examples, MatchMode::Relation);
    v.macro_track_f1 = f1_score(v.macro_track_p, v.macro_track_r);
    v.micro_track_f1 = f1_score(v.micro_track_p, v.micro_track_r);
    v.macro_relation_f1 = f1_score(v.macro_relation_p, v.macro_relation_r);
    v.micro_relation_f1 = f1_score(v.micro_relation_p, v.micro_relation_r);
    v.overall_f1 =
        (v.macro_track_f1 + v.micro_track_f1 + v.macro_relation_f1 + v.micro_relation_f1) / 4.0;
    return v;
}

MetricReport compute_report(const std::vector<ScoredExample>& examples, bool global_micro) {
    MetricReport report;
    report.aggregation = global_micro ? "global-micro" : "per-example";

    std::vector<ExamplePair> all;
    all.reserve(examples.size());
    for (const auto& ex : examples) all.push_back(ex.pair);
    report.overall = compute_metric_values(all, global_micro);

    const std::pair<const char*, std::string ScoredExample::*> axes[] = {
        {"scenario", &ScoredExample::scenario},
        {"language", &ScoredExample::language},
        {"length_bucket", &ScoredExample::length_bucket},
        {"doc_class", &ScoredExample::doc_class},
    };
    for (const auto& [axis, member] : axes) {
        std::map<std::string, std::vector<ExamplePair>> groups;
        for (const auto& ex : examples) groups[ex.*member].push_back(ex.pair);
        for (const auto& [cell, pairs] : groups) {
            report.breakdowns[axis][cell] = compute_metric_values(pairs, global_micro);
        }
    }
    return report;
}

double fleiss_kappa(const AnnotationMatrix& matrix) {
    const int n = matrix.annotators;
    if (n < 2) throw std::runtime_error("fleiss_kappa: need at least 2 annotators");
    const std::size_t items = matrix.counts.size();
    if (items == 0) throw std::runtime_error("fleiss_kappa: empty matrix");
    const std::size_t categories = matrix.counts[0].size();
    if (categories == 0) throw std::runtime_error("fleiss_kappa: no categories");

    std::vector<long long> column_sums(categories, 0);
    double p_bar = 0.0;
    for (std::size_t i = 0; i < items; ++i) {
        const auto& row = matrix.counts[i];
        if (row.size() != categories) {
            throw std::runtime_error("fleiss_kappa: ragged matrix at row " + std::to_string(i));
        }
        long long row_sum = 0;
        long long sq = 0;
        for (std::size_t c = 0; c < categories; ++c) {
            if (row[c] < 0) throw std::runtime_error("fleiss_kappa: negative count");
            row_sum += row[c];
            sq += static_cast<long long>(row[c]) * row[c];
            column_sums[c] += row[c];
        }
        if (row_sum != n) {
            throw std::runtime_error("fleiss_kappa: row " + std::to_string(i) + " sums to " +
                                     std::to_string(row_sum) + ", expected " + std::to_string(n));
        }
        p_bar += static_cast<double>(sq - n) / (static_cast<double>(n) * (n - 1));
    }
    p_bar /= static_cast<double>(items);

    const long long total = static_cast<long long>(items) * n;
    double p_e = 0.0;
    bool degenerate = false;
    for (std::size_t c = 0; c < categories; ++c) {
        if (column_sums[c] == total) degenerate = true;
        double p_c = static_cast<double>(column_sums[c]) / static_cast<double>(total);
        p_e += p_c * p_c;
    }
    if (degenerate) {
        // all mass in one category; agreement is perfect by construction
        if (p_bar >= 1.0 - 1e-12) return 1.0;
        throw std::runtime_error("fleiss_kappa: undefined (chance agreement is 1)");
    }
    return (p_bar - p_e) / (1.0 - p_e);
}

AgreementMatrices build_agreement_matrices(
    const std::vector<std::vector<AnnotationRecord>>& annotators) {
    const int n = static_cast<int>(annotators.size());
    if (n < 2) throw std::runtime_error("agreement needs at least 2 annotators");

    using ItemKey = std::pair<std::string, std::pair<int, SentenceRef>>;
    std::vector<std::map<ItemKey, RelationType>> labeled(n);
    std::set<std::string> id_universe;
    for (int a = 0; a < n; ++a) {
        std::set<std::string> ids;
        for (const auto& record : annotators[a]) {
            if (!ids.insert(record.id).second) {
                throw std::runtime_error("annotator " + std::to_string(a) + ": duplicate example \"" +
                                         record.id + "\"");
            }
            for (const auto& link : record.links) {
                labeled[a][{record.id, {link.target_idx, link.source}}] = link.relation;
            }
        }
        if (a == 0) {
            id_universe = std::move(ids);
        } else if (ids != id_universe) {
            throw std::runtime_error("annotator " + std::to_string(a) +
                                     " covers a different example id set");
        }
    }

    AgreementMatrices out;
    out.trace.annotators = n;
    out.type.annotators = n;

    std::set<ItemKey> union_items;
    for (const auto& m : labeled) {
        for (const auto& [key, rel] : m) {
            (void)rel;
            union_items.insert(key);
        }
    }
    for (const auto& item : union_items) {
        int traced = 0;
        for (const auto& m : labeled) traced += m.count(item);
        out.trace.counts.push_back({traced, n - traced});
        if (traced == n) {
            std::vector<int> row(4, 0);
            for (const auto& m : labeled) ++row[static_cast<int>(m.at(item))];
            out.type.counts.push_back(std::move(row));
        }
    }

    bool have_flags = true;
    for (const auto& records : annotators) {
        for (const auto& record : records) {
            if (!record.modified) have_flags = false;
        }
    }
    if (have_flags) {
        AnnotationMatrix correction;
        correction.annotators = n;
        std::map<std::string, const AnnotationRecord*> first;
        for (const auto& record : annotators[0]) first[record.id] = &record;
        std::vector<std::map<std::string, const AnnotationRecord*>> by_id(n);
        for (int a = 0; a < n; ++a) {
            for (const auto& record : annotators[a]) by_id[a][record.id] = &record;
        }
        for (const auto& [id, record0] : first) {
            std::size_t targets = record0->modified->size();
            for (int a = 1; a < n; ++a) {
                if (by_id[a].at(id)->modified->size() != targets) {
                    throw std::runtime_error("example \"" + id +
                                             "\": annotators disagree on target count in "
                                             "\"modified\" flags");
                }
            }
            for (std::size_t t = 0; t < targets; ++t) {
                int modified = 0;
                for (int a = 0; a < n; ++a) modified += (*by_id[a].at(id)->modified)[t] ? 1 : 0;
                correction.counts.push_back({modified, n - modified});
            }
        }
        out.correction = std::move(correction);
    }
    return out;
}

}  // namespace trove
