#include "trove/tracer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace trove {

namespace {

struct LabelDefinition {
    PreLabel label;
    const char* name;
    const char* definition_en;
    const char* definition_zh;
};

constexpr LabelDefinition kLabelDefinitions[] = {
    {PreLabel::Copy, "COPY", "repeats the source wording verbatim or nearly verbatim",
     "逐字或近乎逐字地重复来源句"},
    {PreLabel::Paraphrase, "PARAPHRASE", "restates the source in different words",
     "用不同的措辞复述来源句"},
    {PreLabel::Reordering, "REORDERING", "rearranges the source wording or structure",
     "调整来源句的语序或结构"},
    {PreLabel::Fusion, "FUSION", "merges material from several source sentences",
     "融合多个来源句的内容"},
    {PreLabel::Summary, "SUMMARY", "condenses the source material",
     "压缩概括来源内容"},
    {PreLabel::Distillation, "DISTILLATION", "keeps only the core point of the source",
     "仅保留来源句的核心要点"},
    {PreLabel::Inference, "INFERENCE", "states something that logically follows from the source",
     "陈述可由来源句逻辑推出的内容"},
    {PreLabel::Expansion, "EXPANSION", "elaborates beyond what the source states",
     "在来源句基础上扩展"},
    {PreLabel::Generalization, "GENERALIZATION", "broadens the source statement",
     "将来源句的表述泛化"},
    {PreLabel::Negation, "NEGATION", "contradicts or negates the source",
     "与来源句矛盾或否定来源句"},
};

int relation_rank(RelationType rel) {
    for (int i = 0; i < static_cast<int>(kRelationPriority.size()); ++i) {
        if (kRelationPriority[i] == rel) return i;
    }
    return static_cast<int>(kRelationPriority.size());
}

// whitespace-separated words plus one per multi-byte code point, so CJK
// text is not undercounted
long long estimate_tokens(const std::string& text) {
    long long count = 0;
    bool in_word = false;
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (uc >= 0x80) {
            if ((uc & 0xC0) != 0x80) ++count;  // lead byte
            in_word = false;
            continue;
        }
        bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (space) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

std::set<SentenceRef> all_refs(const Example& example) {
    std::set<SentenceRef> refs;
    for (int d = 0; d < static_cast<int>(example.documents.size()); ++d) {
        for (int s = 0; s < static_cast<int>(example.documents[d].sentences.size()); ++s) {
            refs.insert({d, s});
        }
    }
    return refs;
}

std::vector<std::pair<int, std::string>> enumerate_targets(const Example& example) {
    std::vector<std::pair<int, std::string>> targets;
    targets.reserve(example.targets.size());
    for (int i = 0; i < static_cast<int>(example.targets.size()); ++i) {
        targets.emplace_back(i, example.targets[i]);
    }
    return targets;
}

std::vector<ProvenanceLink> items_to_links(const RawTraceOutput& raw) {
    std::vector<ProvenanceLink> links;
    links.reserve(raw.items.size());
    for (const auto& item : raw.items) {
        links.push_back({item.target_idx, item.source, map_prelabel(item.label)});
    }
    return links;
}

TraceResult trace_dp(const Example& example, const TraceConfig& config, ChatProvider& chat) {
    TraceResult result;
    const auto chunks = chunk_source(example, config);
    const auto refs = all_refs(example);
    const auto targets = enumerate_targets(example);
    std::vector<std::vector<ProvenanceLink>> per_chunk;
    for (const auto& chunk : chunks) {
        std::string prompt = build_prompt(targets, chunk.sentences, TraceMethod::DP,
                                          example.language);
        std::string reply;
        try {
            reply = chat.complete(prompt);
        } catch (const std::exception& e) {
            throw std::runtime_error("example \"" + example.id + "\" chunk " +
                                     std::to_string(chunk.chunk_idx) + ": " + e.what());
        }
        ++result.diagnostics.chat_calls;
        result.diagnostics.prompt_tokens += estimate_tokens(prompt);
        RawTraceOutput raw = parse_model_output(reply, static_cast<int>(example.targets.size()),
                                                refs);
        result.diagnostics.parse_warnings += raw.parse_warnings;
        per_chunk.push_back(items_to_links(raw));
    }
    result.links = merge_chunk_predictions(per_chunk);
    return result;
}

struct TargetBatch {
    std::vector<int> target_indices;
};

/// Greedy packing of targets so each batch's candidate text volume stays
/// under the window; targets with no candidates are skipped entirely.
std::vector<TargetBatch> batch_targets(const Example& example,
                                       const std::vector<CandidateSet>& candidates,
                                       const TraceConfig& config) {
    std::vector<TargetBatch> batches;
    TargetBatch current;
    long long current_cost = 0;
    for (const auto& set : candidates) {
        if (set.voted.empty()) continue;
        long long cost = 0;
        for (const auto& cand : set.voted) {
            cost += static_cast<long long>(
                tokenize(example.sentence_text(cand.ref), example.language).size());
        }
        if (!current.target_indices.empty() && current_cost + cost > config.window_len) {
            batches.push_back(std::move(current));
            current = {};
            current_cost = 0;
        }
        current.target_indices.push_back(set.target_idx);
        current_cost += cost;
    }
    if (!current.target_indices.empty()) batches.push_back(std::move(current));
    return batches;
}

TraceResult trace_ra(const Example& example, const TraceConfig& config, ChatProvider& chat,
                     EmbeddingProvider* embedder) {
    TraceResult result;
    SentenceIndex index;
    std::vector<CandidateSet> candidates;
    try {
        index = build_index(example);
        for (int i = 0; i < static_cast<int>(example.targets.size()); ++i) {
            candidates.push_back(retrieve_candidates(index, i, example.targets[i],
                                                     config.retrieval, embedder));
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("example \"" + example.id + "\" retrieval: " + e.what());
    }

    const auto example_refs = all_refs(example);
    std::vector<std::set<SentenceRef>> per_target_refs(example.targets.size());
    for (const auto& set : candidates) {
        for (const auto& cand : set.voted) per_target_refs[set.target_idx].insert(cand.ref);
    }

    const auto batches = batch_targets(example, candidates, config);
    std::vector<std::vector<ProvenanceLink>> per_batch;
    for (int b = 0; b < static_cast<int>(batches.size()); ++b) {
        const auto& batch = batches[b];
        std::set<SentenceRef> batch_refs;
        std::vector<std::pair<int, std::string>> targets;
        for (int t : batch.target_indices) {
            targets.emplace_back(t, example.targets[t]);
            batch_refs.insert(per_target_refs[t].begin(), per_target_refs[t].end());
        }
        std::vector<std::pair<SentenceRef, std::string>> sources;
        for (SentenceRef ref : batch_refs) sources.emplace_back(ref, example.sentence_text(ref));

        std::string prompt = build_prompt(targets, sources, TraceMethod::RA, example.language);
        std::string reply;
        try {
            reply = chat.complete(prompt);
        } catch (const std::exception& e) {
            throw std::runtime_error("example \"" + example.id + "\" batch " + std::to_string(b) +
                                     ": " + e.what());
        }
        ++result.diagnostics.chat_calls;
        result.diagnostics.prompt_tokens += estimate_tokens(prompt);

        const auto& valid = config.strict_candidates ? batch_refs : example_refs;
        RawTraceOutput raw = parse_model_output(reply, static_cast<int>(example.targets.size()),
                                                valid);
        result.diagnostics.parse_warnings += raw.parse_warnings;

        std::vector<ProvenanceLink> links;
        for (const auto& item : raw.items) {
            if (config.strict_candidates &&
                per_target_refs[item.target_idx].count(item.source) == 0) {
                ++result.diagnostics.parse_warnings;
                continue;
            }
            links.push_back({item.target_idx, item.source, map_prelabel(item.label)});
        }
        per_batch.push_back(std::move(links));
    }
    result.links = merge_chunk_predictions(per_batch);
    return result;
}

}  // namespace

std::string_view to_string(PreLabel label) {
    for (const auto& def : kLabelDefinitions) {
        if (def.label == label) return def.name;
    }
    return "COPY";
}

std::optional<PreLabel> prelabel_from_string(std::string_view s) {
    std::string upper(s);
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    for (const auto& def : kLabelDefinitions) {
        if (upper == def.name) return def.label;
    }
    return std::nullopt;
}

std::string_view to_string(TraceMethod method) {
    return method == TraceMethod::DP ? "dp" : "ra";
}

TraceMethod trace_method_from_string(std::string_view s) {
    if (s == "dp") return TraceMethod::DP;
    if (s == "ra") return TraceMethod::RA;
    throw std::runtime_error("unknown method \"" + std::string(s) + "\" (expected dp or ra)");
}

std::vector<WindowChunk> chunk_source(const Example& example, const TraceConfig& config) {
    std::vector<WindowChunk> chunks;
    WindowChunk current;
    long long current_tokens = 0;
    auto close = [&]() {
        if (current.sentences.empty()) return;
        current.chunk_idx = static_cast<int>(chunks.size());
        chunks.push_back(std::move(current));
        current = {};
        current_tokens = 0;
    };
    for (int d = 0; d < static_cast<int>(example.documents.size()); ++d) {
        const auto& doc = example.documents[d];
        for (int s = 0; s < static_cast<int>(doc.sentences.size()); ++s) {
            const std::string& text = doc.sentences[s];
            long long cost =
                static_cast<long long>(tokenize(text, example.language).size());
            if (!current.sentences.empty() && current_tokens + cost > config.window_len) close();
            current.sentences.emplace_back(SentenceRef{d, s}, text);
            current_tokens += cost;
            if (cost > config.window_len) close();  // oversize sentence: singleton chunk
        }
    }
    close();
    return chunks;
}

std::string build_prompt(const std::vector<std::pair<int, std::string>>& targets,
                         const std::vector<std::pair<SentenceRef, std::string>>& sources,
                         TraceMethod method, Language language) {
    std::ostringstream out;
    const bool en = language == Language::EN;
    if (en) {
        out << "Task: for each target sentence, find every source sentence it is based on and "
               "label how the target uses that source.\n\n";
        out << "Labels (choose exactly one per pair):\n";
    } else {
        out << "任务：对每个目标句，找出它所依据的每个来源句，并标注目标句对该来源句的使用方式。\n\n";
        out << "标签（每对只选一个）：\n";
    }
    for (const auto& def : kLabelDefinitions) {
        out << "- " << def.name << (en ? ": " : "：")
            << (en ? def.definition_en : def.definition_zh) << "\n";
    }
    out << "\n";
    if (method == TraceMethod::RA) {
        out << (en ? "Candidate source sentences:\n" : "候选来源句：\n");
    } else {
        out << (en ? "Source sentences:\n" : "来源句：\n");
    }
    for (const auto& [ref, text] : sources) {
        out << "D" << (ref.doc_idx + 1) << "-" << (ref.sent_idx + 1) << ": " << text << "\n";
    }
    out << "\n" << (en ? "Target sentences:\n" : "目标句：\n");
    for (const auto& [idx, text] : targets) {
        out << "T" << (idx + 1) << ": " << text << "\n";
    }
    out << "\n" << (en ? "Rules:\n" : "规则：\n");
    if (en) {
        out << "- Report one claim per line, exactly in the form: T<i> -> D<d>-<s> : <LABEL>\n";
        out << "- Use only sentence ids that appear above.\n";
        if (method == TraceMethod::RA) {
            out << "- The sources above are retrieved candidates; trace targets only to them.\n";
        }
        out << "- Output claim lines only, no other text.\n";
    } else {
        out << "- 每条结论占一行，格式严格为：T<i> -> D<d>-<s> : <LABEL>\n";
        out << "- 只能使用上面列出的句子编号。\n";
        if (method == TraceMethod::RA) {
            out << "- 以上来源句为检索得到的候选句，只能追溯到这些候选句。\n";
        }
        out << "- 只输出结论行，不要输出其他文字。\n";
    }
    return out.str();
}

RawTraceOutput parse_model_output(const std::string& text, int n_targets,
                                  const std::set<SentenceRef>& valid_refs) {
    static const std::regex claim_re(
        R"(^T(\d+)\s*->\s*D(\d+)\s*-\s*(\d+)\s*:\s*([A-Za-z]+)$)");
    RawTraceOutput out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        // trim whitespace and surrounding emphasis marks
        auto is_trim = [](char c) {
            return c == ' ' || c == '\t' || c == '\r' || c == '*' || c == '`';
        };
        std::size_t begin = 0, end = line.size();
        while (begin < end && is_trim(line[begin])) ++begin;
        while (end > begin && is_trim(line[end - 1])) --end;
        std::string_view view(line.data() + begin, end - begin);
        if (view.empty()) continue;
        if (view.substr(0, 3) == "```") continue;  // fence lines carry no claim

        std::match_results<std::string_view::const_iterator> m;
        if (!std::regex_match(view.begin(), view.end(), m, claim_re)) {
            ++out.parse_warnings;
            continue;
        }
        if (m[1].length() > 6 || m[2].length() > 6 || m[3].length() > 6) {
            ++out.parse_warnings;
            continue;
        }
        int target = std::stoi(m[1].str());
        int doc = std::stoi(m[2].str());
        int sent = std::stoi(m[3].str());
        auto label = prelabel_from_string(m[4].str());
        if (!label || target < 1 || target > n_targets || doc < 1 || sent < 1) {
            ++out.parse_warnings;
            continue;
        }
        SentenceRef ref{doc - 1, sent - 1};
        if (valid_refs.count(ref) == 0) {
            ++out.parse_warnings;
            continue;
        }
        out.items.push_back({target - 1, ref, *label});
    }
    return out;
}

RelationType map_prelabel(PreLabel label) {
    switch (label) {
        case PreLabel::Copy:
        case PreLabel::Paraphrase:
        case PreLabel::Reordering:
            return RelationType::Quotation;
        case PreLabel::Fusion:
        case PreLabel::Summary:
        case PreLabel::Distillation:
            return RelationType::Compression;
        case PreLabel::Inference:
        case PreLabel::Expansion:
        case PreLabel::Generalization:
            return RelationType::Inference;
        case PreLabel::Negation:
            return RelationType::Other;
    }
    return RelationType::Other;
}

std::vector<ProvenanceLink> merge_chunk_predictions(
    const std::vector<std::vector<ProvenanceLink>>& per_chunk) {
    std::map<std::pair<int, SentenceRef>, RelationType> merged;
    for (const auto& chunk : per_chunk) {
        for (const auto& link : chunk) {
            auto key = std::make_pair(link.target_idx, link.source);
            auto [it, inserted] = merged.try_emplace(key, link.relation);
            if (!inserted && relation_rank(link.relation) < relation_rank(it->second)) {
                it->second = link.relation;
            }
        }
    }
    std::vector<ProvenanceLink> out;
    out.reserve(merged.size());
    for (const auto& [key, relation] : merged) {
        out.push_back({key.first, key.second, relation});
    }
    return out;
}

TraceResult trace_example(const Example& example, const TraceConfig& config, ChatProvider& chat,
                          EmbeddingProvider* embedder) {
    if (config.window_len < 1) throw std::runtime_error("window_len must be positive");
    if (config.method == TraceMethod::DP) return trace_dp(example, config, chat);
    return trace_ra(example, config, chat, embedder);
}

}  // namespace trove
