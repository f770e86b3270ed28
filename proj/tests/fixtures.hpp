#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "test_util.hpp"
#include "trove/corpus.hpp"
#include "trove/providers.hpp"
#include "trove/tracer.hpp"

namespace fixtures {

/// Records every prompt and replies with an empty string.
class RecordingChat : public trove::ChatProvider {
public:
    std::string complete(const std::string& prompt) override {
        prompts.push_back(prompt);
        return "";
    }
    std::vector<std::string> prompts;
};

inline std::string claim_line(const trove::ProvenanceLink& link) {
    return "T" + std::to_string(link.target_idx + 1) + " -> D" +
           std::to_string(link.source.doc_idx + 1) + "-" +
           std::to_string(link.source.sent_idx + 1) + " : COPY";
}

/// Mock-chat JSONL mapping every prompt the config produces for `examples`
/// to that example's gold links rendered as COPY claims.
inline std::string build_mock_chat_file(const std::vector<trove::Example>& examples,
                                        const trove::TraceConfig& config,
                                        const std::string& path) {
    auto embedder = trove::make_builtin_embedder();
    std::string content;
    for (const auto& ex : examples) {
        RecordingChat recorder;
        trove::trace_example(ex, config, recorder, embedder.get());
        std::string reply;
        for (const auto& link : ex.gold.value_or(std::vector<trove::ProvenanceLink>{})) {
            reply += claim_line(link) + "\n";
        }
        for (const auto& prompt : recorder.prompts) {
            content += nlohmann::json{{"prompt", prompt}, {"reply", reply}}.dump() + "\n";
        }
    }
    testutil::write_file(path, content);
    return path;
}

/// Small bilingual fixture whose targets copy source sentences verbatim.
inline std::vector<trove::Example> fixture_examples(int count) {
    std::vector<trove::Example> examples;
    const std::vector<std::string> en_sentences = {
        "the satellite entered orbit after a long flight",
        "engineers confirmed the telemetry was stable",
        "a storm delayed the second launch attempt",
        "the crew completed the checklist in the evening",
    };
    const std::vector<std::string> zh_sentences = {
        "卫星经过长时间飞行进入轨道。",
        "工程师确认遥测数据稳定。",
        "风暴推迟了第二次发射。",
        "乘组在傍晚完成了检查单。",
    };
    for (int i = 0; i < count; ++i) {
        bool zh = i % 3 == 2;
        const auto& pool = zh ? zh_sentences : en_sentences;
        std::vector<std::vector<std::string>> docs;
        if (i % 2 == 0) {
            docs = {{pool[0], pool[1]}, {pool[2], pool[3]}};
        } else {
            docs = {{pool[(i / 2) % 4], pool[(i / 2 + 1) % 4], pool[(i / 2 + 2) % 4]}};
        }
        int doc = i % 2 == 0 ? 1 : 0;
        int sent = i % 2;
        trove::Example ex = testutil::make_example(
            "ex" + std::to_string(i), docs, {docs[doc][sent]},
            zh ? trove::Language::ZH : trove::Language::EN);
        ex.scenario = zh ? "QA2doc" : "QMSum";
        ex.gold = std::vector<trove::ProvenanceLink>{
            {0, {doc, sent}, trove::RelationType::Quotation}};
        examples.push_back(std::move(ex));
    }
    return examples;
}

/// EN example built from `n_sentences` ten-word sentences.
inline trove::Example en_sized_example(const std::string& id, const std::string& scenario,
                                       int n_docs, int n_sentences) {
    std::vector<std::vector<std::string>> docs(n_docs);
    for (int s = 0; s < n_sentences; ++s) {
        std::string sentence;
        for (int w = 0; w < 9; ++w) {
            sentence += "word" + std::to_string((s + w) % 23) + " ";
        }
        sentence += "tail" + std::to_string(s % 17) + ".";
        docs[s % n_docs].push_back(std::move(sentence));
    }
    auto ex = testutil::make_example(id, docs, {docs[0][0]}, trove::Language::EN);
    ex.scenario = scenario;
    ex.gold = std::vector<trove::ProvenanceLink>{{0, {0, 0}, trove::RelationType::Quotation}};
    return ex;
}

/// ZH example built from `n_sentences` eleven-character sentences.
inline trove::Example zh_sized_example(const std::string& id, const std::string& scenario,
                                       int n_docs, int n_sentences) {
    static const std::vector<std::string> stems = {
        "这是一个测试句子内容", "会议记录了重要的决定", "新闻报道提到两个城市",
        "数据显示产量明显上升", "研究人员提出新的方法",
    };
    std::vector<std::vector<std::string>> docs(n_docs);
    for (int s = 0; s < n_sentences; ++s) {
        docs[s % n_docs].push_back(stems[s % stems.size()] + "。");
    }
    auto ex = testutil::make_example(id, docs, {docs[0][0]}, trove::Language::ZH);
    ex.scenario = scenario;
    ex.gold = std::vector<trove::ProvenanceLink>{{0, {0, 0}, trove::RelationType::Quotation}};
    return ex;
}

}  // namespace fixtures
