#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trove/corpus.hpp"
#include "trove/digest.hpp"
#include "trove/metrics.hpp"
#include "trove/providers.hpp"
#include "trove/report.hpp"
#include "trove/retrieval.hpp"
#include "trove/tracer.hpp"

namespace {

using nlohmann::json;
using namespace trove;

constexpr const char* kChatBaseEnv = "TROVE_CHAT_BASE_URL";
constexpr const char* kChatModelEnv = "TROVE_CHAT_MODEL";
constexpr const char* kChatKeyEnv = "TROVE_CHAT_API_KEY";
constexpr const char* kEmbedBaseEnv = "TROVE_EMBED_BASE_URL";
constexpr const char* kEmbedModelEnv = "TROVE_EMBED_MODEL";
constexpr const char* kEmbedKeyEnv = "TROVE_EMBED_API_KEY";
constexpr const char* kCacheDirEnv = "TROVE_CACHE_DIR";

std::string env_or_empty(const char* name) {
    const char* value = std::getenv(name);
    return value == nullptr ? std::string() : std::string(value);
}

std::string require_env(const char* name, const std::string& hint) {
    const char* value = std::getenv(name);
    if (value == nullptr) {
        throw std::runtime_error("environment variable " + std::string(name) + " is not set" +
                                 (hint.empty() ? "" : " (" + hint + ")"));
    }
    return value;
}

std::vector<RetrieverKind> parse_retrievers(const std::string& csv) {
    std::vector<RetrieverKind> kinds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        RetrieverKind kind = retriever_from_string(item);
        if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) kinds.push_back(kind);
    }
    if (kinds.empty()) throw std::runtime_error("--retrievers selects no retriever");
    return kinds;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

struct RetrievalFlags {
    int k = 10;
    int vote_threshold = 2;
    std::string retrievers = "bm25,dense,lcs";

    RetrievalConfig to_config() const {
        RetrievalConfig cfg;
        cfg.k = k;
        cfg.vote_threshold = vote_threshold;
        cfg.active = parse_retrievers(retrievers);
        return cfg;
    }
};

void add_retrieval_flags(CLI::App* cmd, RetrievalFlags& flags) {
    cmd->add_option("--k", flags.k, "Top-k sentences per retriever")
        ->default_val(10)
        ->check(CLI::PositiveNumber);
    cmd->add_option("--vote-threshold", flags.vote_threshold,
                    "Minimum retrievers that must recall a sentence")
        ->default_val(2)
        ->check(CLI::PositiveNumber);
    cmd->add_option("--retrievers", flags.retrievers,
                    "Comma-separated subset of bm25,lcs,dense")
        ->default_val("bm25,dense,lcs");
}

std::unique_ptr<ChatProvider> resolve_chat_provider(const std::string& mock_path,
                                                    ProviderConfig& out_config, bool& is_mock) {
    if (!mock_path.empty()) {
        is_mock = true;
        return make_mock_chat_provider(mock_path);
    }
    is_mock = false;
    out_config.base_url = require_env(kChatBaseEnv, "or pass --mock-chat FILE");
    out_config.model_name = require_env(kChatModelEnv, "");
    out_config.api_key_env = kChatKeyEnv;
    require_env(kChatKeyEnv, "may be empty for keyless endpoints");
    out_config.cache_dir = env_or_empty(kCacheDirEnv);
    return make_http_chat_provider(out_config);
}

std::unique_ptr<EmbeddingProvider> resolve_embedding_provider(const std::string& mock_embed,
                                                              ProviderConfig& out_config,
                                                              bool& is_builtin) {
    if (!mock_embed.empty()) {
        if (mock_embed != "builtin") {
            throw std::runtime_error("--mock-embed only supports \"builtin\"");
        }
        is_builtin = true;
        out_config.base_url = "builtin:";
        return make_builtin_embedder();
    }
    out_config.base_url = require_env(kEmbedBaseEnv, "or pass --mock-embed builtin");
    if (out_config.base_url.rfind("builtin:", 0) == 0) {
        is_builtin = true;
        return make_builtin_embedder();
    }
    is_builtin = false;
    out_config.model_name = require_env(kEmbedModelEnv, "");
    out_config.api_key_env = kEmbedKeyEnv;
    require_env(kEmbedKeyEnv, "may be empty for keyless endpoints");
    out_config.cache_dir = env_or_empty(kCacheDirEnv);
    return make_embedding_provider(out_config);
}

bool uses_dense(const RetrievalConfig& cfg) {
    return std::find(cfg.active.begin(), cfg.active.end(), RetrieverKind::Dense) !=
           cfg.active.end();
}

/// Runs fn(i) for every example index across `jobs` worker threads.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> threads;
    int n_threads = static_cast<int>(std::min<std::size_t>(jobs, count));
    threads.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
}

json retrieval_config_json(const RetrievalConfig& cfg) {
    json retrievers = json::array();
    for (auto kind : cfg.active) retrievers.push_back(std::string(to_string(kind)));
    return {{"k", cfg.k},
            {"vote_threshold", cfg.vote_threshold},
            {"bm25_k1", cfg.bm25_k1},
            {"bm25_b", cfg.bm25_b},
            {"retrievers", retrievers}};
}

json provider_json(const ProviderConfig& cfg, bool mock_or_builtin, const char* mock_label) {
    if (mock_or_builtin) return {{"kind", mock_label}};
    return {{"kind", "http"},
            {"base_url", cfg.base_url},
            {"model", cfg.model_name},
            {"api_key_env", cfg.api_key_env}};
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

struct TraceArgs {
    std::string data;
    std::string out;
    std::string method = "dp";
    int window = 4000;
    int jobs = 1;
    std::string mock_chat;
    std::string mock_embed;
    bool strict_candidates = true;
    RetrievalFlags retrieval;
};

int cmd_trace(const TraceArgs& args) {
    auto examples = load_dataset(args.data);

    TraceConfig config;
    config.method = trace_method_from_string(args.method);
    config.window_len = args.window;
    config.strict_candidates = args.strict_candidates;
    config.retrieval = args.retrieval.to_config();

    ProviderConfig chat_config;
    bool chat_is_mock = false;
    auto chat = resolve_chat_provider(args.mock_chat, chat_config, chat_is_mock);

    std::unique_ptr<EmbeddingProvider> embedder;
    ProviderConfig embed_config;
    bool embed_is_builtin = false;
    if (config.method == TraceMethod::RA && uses_dense(config.retrieval)) {
        embedder = resolve_embedding_provider(args.mock_embed, embed_config, embed_is_builtin);
    }

    const std::string input_digest = file_digest(args.data);

    std::vector<std::optional<TraceResult>> results(examples.size());
    std::vector<std::string> errors(examples.size());
    parallel_for(examples.size(), args.jobs, [&](std::size_t i) {
        try {
            results[i] = trace_example(examples[i], config, *chat, embedder.get());
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    std::vector<PredictionRecord> records;
    long long total_calls = 0, total_warnings = 0;
    int failures = 0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (!results[i]) {
            ++failures;
            std::cerr << "FAILED " << examples[i].id << ": " << errors[i] << "\n";
            continue;
        }
        const TraceResult& r = *results[i];
        records.push_back({examples[i].id, std::string(to_string(config.method)), r.links,
                           r.diagnostics.parse_warnings, r.diagnostics.chat_calls});
        total_calls += r.diagnostics.chat_calls;
        total_warnings += r.diagnostics.parse_warnings;
        std::cerr << "traced " << examples[i].id << ": " << r.links.size() << " links, "
                  << r.diagnostics.chat_calls << " calls, " << r.diagnostics.parse_warnings
                  << " warnings\n";
    }
    save_predictions(records, args.out);

    long long cache_hits = chat->stats().cache_hits;
    if (embedder) cache_hits += embedder->stats().cache_hits;

    json config_snapshot = {
        {"method", std::string(to_string(config.method))},
        {"window_len", config.window_len},
        {"strict_candidates", config.strict_candidates},
        {"retrieval", retrieval_config_json(config.retrieval)},
        {"chat_provider", provider_json(chat_config, chat_is_mock, "mock")},
    };
    if (embedder) {
        config_snapshot["embed_provider"] =
            provider_json(embed_config, embed_is_builtin, "builtin");
    }
    json manifest = {
        {"run_id", sha256_hex(input_digest + config_snapshot.dump()).substr(0, 12)},
        {"timestamp", utc_timestamp()},
        {"config", config_snapshot},
        {"input", {{"path", args.data}, {"sha256", input_digest}}},
        {"counts",
         {{"examples", examples.size()},
          {"failures", failures},
          {"chat_calls", total_calls},
          {"cache_hits", cache_hits},
          {"warnings", total_warnings}}},
    };
    write_text_file(args.out + ".manifest.json", manifest.dump(2) + "\n");

    if (failures > 0) {
        std::cerr << failures << " example(s) failed; successes preserved in " << args.out << "\n";
        return 2;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// retrieve
// ---------------------------------------------------------------------------

struct RetrieveArgs {
    std::string data;
    std::string out;
    int jobs = 1;
    std::string mock_embed;
    RetrievalFlags retrieval;
};

int cmd_retrieve(const RetrieveArgs& args) {
    auto examples = load_dataset(args.data);
    RetrievalConfig config = args.retrieval.to_config();

    std::unique_ptr<EmbeddingProvider> embedder;
    ProviderConfig embed_config;
    bool embed_is_builtin = false;
    if (uses_dense(config)) {
        embedder = resolve_embedding_provider(args.mock_embed, embed_config, embed_is_builtin);
    }

    std::vector<std::optional<std::vector<CandidateSet>>> results(examples.size());
    std::vector<std::string> errors(examples.size());
    parallel_for(examples.size(), args.jobs, [&](std::size_t i) {
        try {
            SentenceIndex index = build_index(examples[i]);
            std::vector<CandidateSet> sets;
            for (int t = 0; t < static_cast<int>(examples[i].targets.size()); ++t) {
                sets.push_back(
                    retrieve_candidates(index, t, examples[i].targets[t], config, embedder.get()));
            }
            results[i] = std::move(sets);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    std::ofstream out(args.out);
    if (!out) throw std::runtime_error("cannot write file: " + args.out);
    int failures = 0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (!results[i]) {
            ++failures;
            std::cerr << "FAILED " << examples[i].id << ": " << errors[i] << "\n";
            continue;
        }
        for (const auto& set : *results[i]) {
            json candidates = json::array();
            for (const auto& cand : set.voted) {
                candidates.push_back({{"doc_idx", cand.ref.doc_idx},
                                      {"sent_idx", cand.ref.sent_idx},
                                      {"votes", cand.votes}});
            }
            json line = {{"id", examples[i].id},
                         {"target_idx", set.target_idx},
                         {"candidates", std::move(candidates)}};
            out << line.dump() << '\n';
        }
    }
    return failures > 0 ? 2 : 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    std::string gold;
    std::string data;
    std::string out;
    bool global_micro = false;
};

bool file_looks_like_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        return j.is_object() && j.contains("targets");
    }
    return false;  // empty file: shape does not matter
}

int cmd_eval(const EvalArgs& args) {
    auto predictions = load_predictions(args.pred);

    std::vector<Example> dataset;
    std::map<std::string, std::vector<ProvenanceLink>> gold_links;
    if (file_looks_like_dataset(args.gold)) {
        dataset = load_dataset(args.gold);
        for (const auto& ex : dataset) {
            gold_links[ex.id] = ex.gold.value_or(std::vector<ProvenanceLink>{});
        }
    } else {
        if (args.data.empty()) {
            throw std::runtime_error(
                "--gold holds bare links; pass --data DATASET for targets and metadata");
        }
        dataset = load_dataset(args.data);
        for (const auto& rec : load_predictions(args.gold)) {
            if (!gold_links.emplace(rec.id, rec.links).second) {
                throw std::runtime_error("duplicate example id \"" + rec.id + "\" in gold file");
            }
        }
    }

    std::map<std::string, const Example*> by_id;
    for (const auto& ex : dataset) {
        if (!by_id.emplace(ex.id, &ex).second) {
            throw std::runtime_error("duplicate example id \"" + ex.id + "\" in dataset");
        }
    }
    for (const auto& [id, links] : gold_links) {
        (void)links;
        if (by_id.count(id) == 0) {
            throw std::runtime_error("gold id \"" + id + "\" is not in the dataset");
        }
    }

    std::map<std::string, const PredictionRecord*> pred_by_id;
    std::vector<std::string> unknown;
    for (const auto& rec : predictions) {
        if (!pred_by_id.emplace(rec.id, &rec).second) {
            throw std::runtime_error("duplicate example id \"" + rec.id + "\" in predictions");
        }
        if (by_id.count(rec.id) == 0) unknown.push_back(rec.id);
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& id : unknown) list += (list.empty() ? "" : ", ") + id;
        throw std::runtime_error("prediction ids missing from gold: " + list);
    }

    std::vector<ScoredExample> scored;
    std::vector<std::string> without_preds;
    for (const auto& ex : dataset) {
        ScoredExample s;
        s.pair.id = ex.id;
        s.pair.n_targets = static_cast<int>(ex.targets.size());
        if (auto it = gold_links.find(ex.id); it != gold_links.end()) s.pair.gold = it->second;
        if (auto it = pred_by_id.find(ex.id); it != pred_by_id.end()) {
            s.pair.pred = it->second->links;
        } else {
            without_preds.push_back(ex.id);
        }
        // the link invariants hold for anything we score
        auto check_ranges = [&](const std::vector<ProvenanceLink>& links, const char* what) {
            for (const auto& link : links) {
                if (link.target_idx >= s.pair.n_targets || !ex.contains(link.source)) {
                    throw std::runtime_error("example \"" + ex.id + "\": " + what +
                                             " link out of range");
                }
            }
        };
        check_ranges(s.pair.pred, "prediction");
        check_ranges(s.pair.gold, "gold");
        s.scenario = ex.scenario;
        s.language = std::string(to_string(ex.language));
        s.length_bucket = std::string(to_string(ex.length_bucket));
        s.doc_class = std::string(to_string(ex.doc_class));
        scored.push_back(std::move(s));
    }
    if (!without_preds.empty()) {
        std::cerr << "note: " << without_preds.size()
                  << " example(s) have no prediction record and score as empty:";
        for (const auto& id : without_preds) std::cerr << ' ' << id;
        std::cerr << "\n";
    }

    MetricReport report = compute_report(scored, args.global_micro);
    std::cout << report_to_text(report);
    if (!args.out.empty()) {
        write_text_file(args.out + ".json", report_to_json(report).dump(2) + "\n");
        write_text_file(args.out + ".csv", report_to_csv(report));
        write_text_file(args.out + ".txt", report_to_text(report));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// kappa
// ---------------------------------------------------------------------------

struct KappaArgs {
    std::vector<std::string> files;
};

int cmd_kappa(const KappaArgs& args) {
    if (args.files.size() < 2) {
        throw std::runtime_error("kappa needs at least 2 annotation files");
    }
    std::vector<std::vector<AnnotationRecord>> annotators;
    for (const auto& path : args.files) annotators.push_back(load_annotations(path));
    AgreementMatrices matrices = build_agreement_matrices(annotators);

    auto print_kappa = [](const char* name, const AnnotationMatrix* matrix,
                          const char* absent_reason) {
        std::cout << name << " kappa: ";
        if (matrix == nullptr) {
            std::cout << "n/a (" << absent_reason << ")\n";
            return;
        }
        if (matrix->counts.empty()) {
            std::cout << "n/a (no items)\n";
            return;
        }
        try {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", fleiss_kappa(*matrix));
            std::cout << buf << " (" << matrix->counts.size() << " items)\n";
        } catch (const std::exception& e) {
            std::cout << "n/a (" << e.what() << ")\n";
        }
    };
    print_kappa("trace", &matrices.trace, "");
    print_kappa("type", &matrices.type, "");
    print_kappa("correction", matrices.correction ? &*matrices.correction : nullptr,
                "annotation files carry no \"modified\" flags");
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string in;
    std::string format = "text";
    std::string out;
};

int cmd_report(const ReportArgs& args) {
    std::ifstream in(args.in);
    if (!in) throw std::runtime_error("cannot open report: " + args.in);
    json j;
    in >> j;
    MetricReport report = report_from_json(j);
    std::string rendered;
    if (args.format == "csv") {
        rendered = report_to_csv(report);
    } else if (args.format == "text") {
        rendered = report_to_text(report);
    } else {
        throw std::runtime_error("--format must be csv or text");
    }
    if (args.out.empty()) {
        std::cout << rendered;
    } else {
        write_text_file(args.out, rendered);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sentence-level text provenance: trace targets to source sentences,"
                 " classify relations, and score predictions"};
    app.require_subcommand(1);

    TraceArgs trace_args;
    auto* trace_cmd = app.add_subcommand(
        "trace", "Trace every example with a chat model (dp or ra) and write predictions");
    trace_cmd->add_option("--data", trace_args.data, "Dataset JSONL")->required();
    trace_cmd->add_option("--out", trace_args.out, "Prediction JSONL to write")->required();
    trace_cmd->add_option("--method", trace_args.method, "Tracing method")
        ->default_val("dp")
        ->check(CLI::IsMember({"dp", "ra"}));
    trace_cmd->add_option("--window", trace_args.window, "Model window size in tokens")
        ->default_val(4000)
        ->check(CLI::PositiveNumber);
    trace_cmd->add_option("--jobs", trace_args.jobs, "Concurrent examples")
        ->default_val(1)
        ->check(CLI::PositiveNumber);
    trace_cmd->add_option("--mock-chat", trace_args.mock_chat,
                          "JSONL of {\"prompt_digest\"|\"prompt\", \"reply\"} canned replies");
    trace_cmd->add_option("--mock-embed", trace_args.mock_embed,
                          "\"builtin\" selects the offline embedder");
    trace_cmd->add_option("--strict-candidates", trace_args.strict_candidates,
                          "RA: drop links outside the target's candidates")
        ->default_val(true);
    add_retrieval_flags(trace_cmd, trace_args.retrieval);

    RetrieveArgs retrieve_args;
    auto* retrieve_cmd = app.add_subcommand(
        "retrieve", "Emit voted candidate sets per target sentence (no chat calls)");
    retrieve_cmd->add_option("--data", retrieve_args.data, "Dataset JSONL")->required();
    retrieve_cmd->add_option("--out", retrieve_args.out, "Candidate JSONL to write")->required();
    retrieve_cmd->add_option("--jobs", retrieve_args.jobs, "Concurrent examples")
        ->default_val(1)
        ->check(CLI::PositiveNumber);
    retrieve_cmd->add_option("--mock-embed", retrieve_args.mock_embed,
                             "\"builtin\" selects the offline embedder");
    add_retrieval_flags(retrieve_cmd, retrieve_args.retrieval);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand(
        "eval", "Score predictions against gold links with the full metric suite");
    eval_cmd->add_option("--pred", eval_args.pred, "Prediction JSONL")->required();
    eval_cmd->add_option("--gold", eval_args.gold,
                         "Gold file: dataset JSONL with gold links, or bare links JSONL")
        ->required();
    eval_cmd->add_option("--data", eval_args.data,
                         "Dataset JSONL (needed when --gold holds bare links)");
    eval_cmd->add_option("--out", eval_args.out,
                         "Report prefix; writes PREFIX.json/.csv/.txt");
    eval_cmd->add_flag("--global-micro", eval_args.global_micro,
                       "Pool micro counts over the whole dataset instead of per example");

    KappaArgs kappa_args;
    auto* kappa_cmd =
        app.add_subcommand("kappa", "Fleiss' kappa agreement across annotation files");
    kappa_cmd->add_option("files", kappa_args.files, "Two or more annotation JSONL files");

    ReportArgs report_args;
    auto* report_cmd = app.add_subcommand("report", "Re-render a saved report");
    report_cmd->add_option("--in", report_args.in, "Saved PREFIX.json report")->required();
    report_cmd->add_option("--format", report_args.format, "Output format")
        ->default_val("text")
        ->check(CLI::IsMember({"csv", "text"}));
    report_cmd->add_option("--out", report_args.out, "Write here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (trace_cmd->parsed()) return cmd_trace(trace_args);
        if (retrieve_cmd->parsed()) return cmd_retrieve(retrieve_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (kappa_cmd->parsed()) return cmd_kappa(kappa_args);
        if (report_cmd->parsed()) return cmd_report(report_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
