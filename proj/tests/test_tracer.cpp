#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "test_util.hpp"
#include "trove/tracer.hpp"

using namespace trove;
using testutil::make_example;

namespace {

/// Returns a fixed reply for every prompt and remembers the prompts.
class ScriptedChat : public ChatProvider {
public:
    explicit ScriptedChat(std::string reply) : reply_(std::move(reply)) {}

    std::string complete(const std::string& prompt) override {
        prompts.push_back(prompt);
        return reply_;
    }

    std::vector<std::string> prompts;

private:
    std::string reply_;
};

class FailingChat : public ChatProvider {
public:
    std::string complete(const std::string&) override {
        throw std::runtime_error("provider exploded");
    }
};

TraceConfig dp_config(int window) {
    TraceConfig cfg;
    cfg.method = TraceMethod::DP;
    cfg.window_len = window;
    return cfg;
}

std::vector<SentenceRef> chunk_refs(const std::vector<WindowChunk>& chunks) {
    std::vector<SentenceRef> refs;
    for (const auto& chunk : chunks) {
        for (const auto& [ref, text] : chunk.sentences) refs.push_back(ref);
    }
    return refs;
}

}  // namespace

TEST_CASE("chunk_source packs greedily and respects the window") {
    auto ex = make_example("c", {{"a b c d", "e f g h", "i j k l"}}, {"t"});

    auto one = chunk_source(ex, dp_config(100));
    REQUIRE(one.size() == 1);
    CHECK(one[0].sentences.size() == 3);

    auto packed = chunk_source(ex, dp_config(8));
    REQUIRE(packed.size() == 2);
    CHECK(packed[0].sentences.size() == 2);  // [s0, s1], then [s2]
    CHECK(packed[1].sentences.size() == 1);
    CHECK(packed[0].chunk_idx == 0);
    CHECK(packed[1].chunk_idx == 1);
}

TEST_CASE("chunk_source puts an oversize sentence in a singleton chunk") {
    auto ex = make_example("big", {{"one two", "a b c d e f g h i j", "tail here"}}, {"t"});
    auto chunks = chunk_source(ex, dp_config(8));
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[1].sentences.size() == 1);
    CHECK(chunks[1].sentences[0].first == SentenceRef{0, 1});
}

TEST_CASE("chunks partition the source in order") {
    std::mt19937 rng(41);
    for (int iter = 0; iter < 100; ++iter) {
        int n_docs = 1 + static_cast<int>(rng() % 3);
        std::vector<std::vector<std::string>> docs;
        for (int d = 0; d < n_docs; ++d) {
            int n_sents = 1 + static_cast<int>(rng() % 5);
            std::vector<std::string> sentences;
            for (int s = 0; s < n_sents; ++s) {
                int words = 1 + static_cast<int>(rng() % 7);
                std::string text;
                for (int w = 0; w < words; ++w) {
                    if (w) text += ' ';
                    text += "w" + std::to_string(w);
                }
                sentences.push_back(text);
            }
            docs.push_back(sentences);
        }
        auto ex = make_example("p", docs, {"t"});
        int window = 1 + static_cast<int>(rng() % 12);
        auto chunks = chunk_source(ex, dp_config(window));

        std::vector<SentenceRef> expected;
        for (int d = 0; d < n_docs; ++d) {
            for (int s = 0; s < static_cast<int>(docs[d].size()); ++s) expected.push_back({d, s});
        }
        CHECK(chunk_refs(chunks) == expected);
    }
}

TEST_CASE("build_prompt enumerates sources and targets with 1-based labels") {
    std::vector<std::pair<int, std::string>> targets = {{0, "the target"}};
    std::vector<std::pair<SentenceRef, std::string>> sources = {
        {{0, 0}, "first"}, {{0, 1}, "second"}, {{0, 2}, "third"}};
    std::string prompt = build_prompt(targets, sources, TraceMethod::DP, Language::EN);
    CHECK(prompt.find("D1-1: first") != std::string::npos);
    CHECK(prompt.find("D1-2: second") != std::string::npos);
    CHECK(prompt.find("D1-3: third") != std::string::npos);
    CHECK(prompt.find("D1-4") == std::string::npos);
    CHECK(prompt.find("T1: the target") != std::string::npos);
    CHECK(prompt.find("T<i> -> D<d>-<s> : <LABEL>") != std::string::npos);
    for (PreLabel label : kAllPreLabels) {
        CHECK(prompt.find(std::string(to_string(label))) != std::string::npos);
    }

    // RA restricts the prompt to the named candidates
    std::vector<std::pair<SentenceRef, std::string>> candidates = {{{0, 1}, "second"},
                                                                   {{1, 0}, "other doc"}};
    std::string ra = build_prompt(targets, candidates, TraceMethod::RA, Language::EN);
    CHECK(ra.find("D1-2: second") != std::string::npos);
    CHECK(ra.find("D2-1: other doc") != std::string::npos);
    CHECK(ra.find("D1-1") == std::string::npos);

    CHECK(build_prompt(targets, sources, TraceMethod::DP, Language::EN) == prompt);

    std::string zh = build_prompt(targets, sources, TraceMethod::RA, Language::ZH);
    CHECK(zh.find("目标句") != std::string::npos);
    CHECK(zh.find("COPY") != std::string::npos);
}

TEST_CASE("parse_model_output accepts the grammar and converts to 0-based") {
    std::set<SentenceRef> valid = {{0, 1}, {1, 0}};
    auto out = parse_model_output("T1 -> D1-2 : COPY", 3, valid);
    CHECK(out.parse_warnings == 0);
    REQUIRE(out.items.size() == 1);
    CHECK(out.items[0] == TraceItem{0, {0, 1}, PreLabel::Copy});

    auto fenced = parse_model_output("```\nT1 -> D1-2 : COPY\n  T2->D2-1:SUMMARY  \n```", 3, valid);
    CHECK(fenced.parse_warnings == 0);
    REQUIRE(fenced.items.size() == 2);
    CHECK(fenced.items[1] == TraceItem{1, {1, 0}, PreLabel::Summary});

    auto starred = parse_model_output("**T1 -> D1-2 : negation**", 3, valid);
    REQUIRE(starred.items.size() == 1);
    CHECK(starred.items[0].label == PreLabel::Negation);
}

TEST_CASE("parse_model_output drops and counts malformed or invalid items") {
    std::set<SentenceRef> valid = {{0, 0}};
    auto unknown_ref = parse_model_output("T1 -> D9-9 : COPY", 3, valid);
    CHECK(unknown_ref.items.empty());
    CHECK(unknown_ref.parse_warnings == 1);

    auto unknown_label = parse_model_output("T1 -> D1-1 : FABRICATE", 3, valid);
    CHECK(unknown_label.items.empty());
    CHECK(unknown_label.parse_warnings == 1);

    auto prose = parse_model_output("The target derives from the first sentence.", 3, valid);
    CHECK(prose.items.empty());
    CHECK(prose.parse_warnings == 1);

    auto bad_target = parse_model_output("T9 -> D1-1 : COPY", 3, valid);
    CHECK(bad_target.items.empty());
    CHECK(bad_target.parse_warnings == 1);

    auto zero_index = parse_model_output("T0 -> D1-1 : COPY", 3, valid);
    CHECK(zero_index.items.empty());
    CHECK(zero_index.parse_warnings == 1);

    CHECK(parse_model_output("", 3, valid).parse_warnings == 0);
    CHECK(parse_model_output("T1 -> D999999999999-1 : COPY", 3, valid).parse_warnings == 1);
}

TEST_CASE("map_prelabel follows the label-mapping table") {
    CHECK(map_prelabel(PreLabel::Copy) == RelationType::Quotation);
    CHECK(map_prelabel(PreLabel::Paraphrase) == RelationType::Quotation);
    CHECK(map_prelabel(PreLabel::Reordering) == RelationType::Quotation);
    CHECK(map_prelabel(PreLabel::Fusion) == RelationType::Compression);
    CHECK(map_prelabel(PreLabel::Summary) == RelationType::Compression);
    CHECK(map_prelabel(PreLabel::Distillation) == RelationType::Compression);
    CHECK(map_prelabel(PreLabel::Inference) == RelationType::Inference);
    CHECK(map_prelabel(PreLabel::Expansion) == RelationType::Inference);
    CHECK(map_prelabel(PreLabel::Generalization) == RelationType::Inference);
    CHECK(map_prelabel(PreLabel::Negation) == RelationType::Other);
}

TEST_CASE("map_prelabel is total and partitions 3/3/3/1") {
    std::map<RelationType, int> preimages;
    for (PreLabel label : kAllPreLabels) ++preimages[map_prelabel(label)];
    CHECK(preimages.size() == 4);
    CHECK(preimages[RelationType::Quotation] == 3);
    CHECK(preimages[RelationType::Compression] == 3);
    CHECK(preimages[RelationType::Inference] == 3);
    CHECK(preimages[RelationType::Other] == 1);
}

TEST_CASE("merge_chunk_predictions unions, dedupes, and resolves conflicts") {
    ProvenanceLink a{0, {0, 0}, RelationType::Compression};
    ProvenanceLink b{1, {0, 1}, RelationType::Inference};

    auto disjoint = merge_chunk_predictions({{b}, {a}});
    REQUIRE(disjoint.size() == 2);
    CHECK(disjoint[0] == a);  // sorted by (target, source)
    CHECK(disjoint[1] == b);

    ProvenanceLink a_quote{0, {0, 0}, RelationType::Quotation};
    auto conflict = merge_chunk_predictions({{a}, {a_quote}});
    REQUIRE(conflict.size() == 1);
    CHECK(conflict[0].relation == RelationType::Quotation);  // priority wins

    auto duplicate = merge_chunk_predictions({{a}, {a}});
    CHECK(duplicate.size() == 1);
}

TEST_CASE("merge_chunk_predictions is idempotent and order-insensitive") {
    std::mt19937 rng(43);
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<std::vector<ProvenanceLink>> chunks(1 + rng() % 4);
        for (auto& chunk : chunks) {
            int n = static_cast<int>(rng() % 5);
            for (int i = 0; i < n; ++i) {
                chunk.push_back({static_cast<int>(rng() % 3),
                                 {static_cast<int>(rng() % 2), static_cast<int>(rng() % 3)},
                                 static_cast<RelationType>(rng() % 4)});
            }
        }
        auto merged = merge_chunk_predictions(chunks);
        CHECK(merge_chunk_predictions({merged}) == merged);
        auto shuffled = chunks;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(merge_chunk_predictions(shuffled) == merged);
        // one relation per (target, source) pair
        std::set<std::pair<int, SentenceRef>> pairs;
        for (const auto& link : merged) {
            CHECK(pairs.insert({link.target_idx, link.source}).second);
        }
    }
}

TEST_CASE("trace DP: empty replies produce no links, one call per chunk") {
    auto ex = make_example("dp1", {{"a b c d", "e f g h", "i j k l"}}, {"target one"});
    ScriptedChat chat("");
    auto result = trace_example(ex, dp_config(8), chat, nullptr);
    CHECK(result.links.empty());
    CHECK(result.diagnostics.parse_warnings == 0);
    CHECK(result.diagnostics.chat_calls == 2);
    CHECK(chat.prompts.size() == 2);
}

TEST_CASE("trace DP: the same valid line from every chunk merges to one link") {
    auto ex = make_example("dp2", {{"a b c d", "e f g h", "i j k l"}}, {"target one"});
    ScriptedChat chat("T1 -> D1-1 : PARAPHRASE");
    auto result = trace_example(ex, dp_config(8), chat, nullptr);
    CHECK(result.diagnostics.chat_calls == 2);
    REQUIRE(result.links.size() == 1);
    CHECK(result.links[0] == ProvenanceLink{0, {0, 0}, RelationType::Quotation});
}

TEST_CASE("trace DP: provider failure names the example and chunk") {
    auto ex = make_example("dp3", {{"a b", "c d"}}, {"t"});
    FailingChat chat;
    CHECK_THROWS_WITH_AS(trace_example(ex, dp_config(100), chat, nullptr),
                         doctest::Contains("dp3"), std::runtime_error);
}

TEST_CASE("trace RA: strict mode drops out-of-candidate references") {
    // target copies sentence (0,2); every retriever should vote for it
    auto ex = make_example("ra1",
                           {{"the cat sat on the mat", "a dog barked loudly",
                             "the cat chased the dog", "rain fell all day"}},
                           {"the cat chased the dog"});
    TraceConfig cfg;
    cfg.method = TraceMethod::RA;
    cfg.retrieval.k = 1;  // k below N so the candidate set is a strict subset
    auto embedder = make_builtin_embedder();

    // reply cites only a non-candidate sentence
    ScriptedChat wrong("T1 -> D1-4 : COPY");
    auto strict = trace_example(ex, cfg, wrong, embedder.get());
    CHECK(strict.links.empty());
    CHECK(strict.diagnostics.parse_warnings > 0);

    ScriptedChat right("T1 -> D1-3 : COPY");
    auto traced = trace_example(ex, cfg, right, embedder.get());
    REQUIRE(traced.links.size() == 1);
    CHECK(traced.links[0] == ProvenanceLink{0, {0, 2}, RelationType::Quotation});

    cfg.strict_candidates = false;
    ScriptedChat loose("T1 -> D1-4 : COPY");
    auto non_strict = trace_example(ex, cfg, loose, embedder.get());
    REQUIRE(non_strict.links.size() == 1);
    CHECK(non_strict.links[0].source == SentenceRef{0, 3});
}

TEST_CASE("trace RA: strict links always come from the voted candidates") {
    std::mt19937 rng(47);
    TraceConfig cfg;
    cfg.method = TraceMethod::RA;
    cfg.retrieval.k = 2;
    auto embedder = make_builtin_embedder();
    for (int iter = 0; iter < 20; ++iter) {
        auto ex = make_example("rnd",
                               {{"alpha beta gamma", "delta epsilon", "zeta eta theta",
                                 "iota kappa"}},
                               {"alpha beta", "zeta eta"});
        // reply cites a random sentence for a random target
        int t = 1 + static_cast<int>(rng() % 2);
        int s = 1 + static_cast<int>(rng() % 4);
        std::string reply = "T" + std::to_string(t) + " -> D1-" + std::to_string(s) + " : COPY";
        ScriptedChat chat(reply);
        auto result = trace_example(ex, cfg, chat, embedder.get());

        auto index = build_index(ex);
        for (const auto& link : result.links) {
            auto cands = retrieve_candidates(index, link.target_idx,
                                             ex.targets[link.target_idx], cfg.retrieval,
                                             embedder.get());
            auto refs = cands.voted_refs();
            CHECK(std::find(refs.begin(), refs.end(), link.source) != refs.end());
        }
    }
}

TEST_CASE("trace is deterministic with mock providers") {
    auto ex = make_example("det",
                           {{"the cat sat on the mat", "a dog barked loudly"},
                            {"the cat chased the dog"}},
                           {"the cat chased the dog", "a dog barked"});
    for (TraceMethod method : {TraceMethod::DP, TraceMethod::RA}) {
        TraceConfig cfg;
        cfg.method = method;
        cfg.window_len = 6;
        auto embedder = make_builtin_embedder();
        ScriptedChat chat1("T1 -> D2-1 : COPY\nT2 -> D1-2 : PARAPHRASE");
        ScriptedChat chat2("T1 -> D2-1 : COPY\nT2 -> D1-2 : PARAPHRASE");
        auto first = trace_example(ex, cfg, chat1, embedder.get());
        auto second = trace_example(ex, cfg, chat2, embedder.get());
        CHECK(first.links == second.links);
        CHECK(first.diagnostics.chat_calls == second.diagnostics.chat_calls);
        CHECK(first.diagnostics.parse_warnings == second.diagnostics.parse_warnings);
        CHECK(chat1.prompts == chat2.prompts);
    }
}

TEST_CASE("prelabel names round-trip case-insensitively") {
    for (PreLabel label : kAllPreLabels) {
        auto name = std::string(to_string(label));
        CHECK(prelabel_from_string(name) == label);
        std::string lower = name;
        for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        CHECK(prelabel_from_string(lower) == label);
    }
    CHECK(!prelabel_from_string("QUOTATION").has_value());  // relation, not a pre-label
}
