#include "trove/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include <json.hpp>

namespace trove {

using nlohmann::json;

namespace {

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::size_t utf8_seq_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xE0) == 0xC0) return 2;
    if ((lead & 0xF0) == 0xE0) return 3;
    if ((lead & 0xF8) == 0xF0) return 4;
    return 1;  // invalid lead byte: treat as a single unit
}

constexpr std::string_view kIdeographicSpace = "\xe3\x80\x80";  // U+3000

bool is_space_codepoint(std::string_view cp) {
    return (cp.size() == 1 && is_ascii_space(cp[0])) || cp == kIdeographicSpace;
}

std::string strip_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t len = utf8_seq_len(static_cast<unsigned char>(s[i]));
        std::string_view cp = s.substr(i, len);
        if (!is_space_codepoint(cp)) out.append(cp);
        i += len;
    }
    return out;
}

std::string_view trim_whitespace(std::string_view s) {
    std::size_t begin = 0;
    while (begin < s.size()) {
        std::size_t len = utf8_seq_len(static_cast<unsigned char>(s[begin]));
        if (!is_space_codepoint(s.substr(begin, len))) break;
        begin += len;
    }
    // scan forward to find the last non-space boundary
    std::size_t end = begin;
    std::size_t i = begin;
    while (i < s.size()) {
        std::size_t len = utf8_seq_len(static_cast<unsigned char>(s[i]));
        if (!is_space_codepoint(s.substr(i, len))) end = i + len;
        i += len;
    }
    return s.substr(begin, end - begin);
}

// Abbreviations that suppress an EN sentence split; single uppercase
// initials ("J.") are guarded as well.
const std::unordered_set<std::string>& en_abbreviations() {
    static const std::unordered_set<std::string> set = {
        "Mr.",   "Mrs.",  "Ms.",   "Dr.",   "Prof.", "Sr.",   "Jr.",    "St.",
        "Mt.",   "Ft.",   "Gen.",  "Col.",  "Capt.", "Lt.",   "Sgt.",   "Rev.",
        "Hon.",  "Pres.", "Gov.",  "Sen.",  "Rep.",  "vs.",   "etc.",   "e.g.",
        "i.e.",  "cf.",   "al.",   "Fig.",  "Eq.",   "No.",   "Vol.",   "pp.",
        "p.",    "Jan.",  "Feb.",  "Mar.",  "Apr.",  "Jun.",  "Jul.",   "Aug.",
        "Sep.",  "Sept.", "Oct.",  "Nov.",  "Dec.",  "U.S.",  "U.K.",   "U.N.",
        "E.U.",  "Inc.",  "Ltd.",  "Co.",   "Corp.", "Ave.",  "Blvd.",  "Rd.",
        "approx.", "dept.", "est.", "min.", "max.",
    };
    return set;
}

bool is_en_abbreviation(std::string_view word) {
    // strip leading non-alphanumeric ASCII, e.g. "(e.g." -> "e.g."
    while (!word.empty()) {
        unsigned char c = static_cast<unsigned char>(word.front());
        if (c >= 0x80 || std::isalnum(c)) break;
        word.remove_prefix(1);
    }
    if (word.size() == 2 && word[1] == '.' &&
        std::isupper(static_cast<unsigned char>(word[0]))) {
        return true;  // single-letter initial
    }
    return en_abbreviations().count(std::string(word)) > 0;
}

bool is_opening_quote_at(std::string_view text, std::size_t pos) {
    if (pos >= text.size()) return false;
    char c = text[pos];
    if (c == '"' || c == '\'') return true;
    std::string_view rest = text.substr(pos);
    static constexpr std::string_view openers[] = {
        "\xe2\x80\x9c",  // U+201C left double quote
        "\xe2\x80\x98",  // U+2018 left single quote
        "\xc2\xab",      // U+00AB left guillemet
        "\xe3\x80\x8c",  // U+300C corner bracket
        "\xe3\x80\x8e",  // U+300E white corner bracket
    };
    for (auto q : openers) {
        if (rest.substr(0, q.size()) == q) return true;
    }
    return false;
}

std::vector<std::string> segment_en(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    std::size_t i = 0;
    auto flush = [&](std::size_t end_excl) {
        std::string_view sent = trim_whitespace(text.substr(start, end_excl - start));
        if (!sent.empty()) out.emplace_back(sent);
    };
    while (i < text.size()) {
        char c = text[i];
        if (c == '.' || c == '!' || c == '?') {
            std::size_t j = i + 1;
            if (j < text.size() && is_ascii_space(text[j])) {
                while (j < text.size() && is_ascii_space(text[j])) ++j;
                bool boundary =
                    j < text.size() &&
                    ((text[j] >= 'A' && text[j] <= 'Z') || is_opening_quote_at(text, j));
                if (boundary && c == '.') {
                    std::size_t w = i;
                    while (w > 0 && !is_ascii_space(text[w - 1])) --w;
                    if (is_en_abbreviation(text.substr(w, i - w + 1))) boundary = false;
                }
                if (boundary) {
                    flush(i + 1);
                    start = j;
                    i = j;
                    continue;
                }
            }
        }
        ++i;
    }
    flush(text.size());
    return out;
}

bool is_zh_terminator(std::string_view cp) {
    return cp == "\xe3\x80\x82"     // 。
           || cp == "\xef\xbc\x81"  // ！
           || cp == "\xef\xbc\x9f"  // ？
           || cp == "\xef\xbc\x9b"; // ；
}

bool is_zh_closer(std::string_view cp) {
    if (cp == "\"" || cp == "'") return true;
    static constexpr std::string_view closers[] = {
        "\xe2\x80\x9d",  // ” U+201D
        "\xe2\x80\x99",  // ’ U+2019
        "\xe3\x80\x8d",  // 」
        "\xe3\x80\x8f",  // 』
        "\xe3\x80\x8b",  // 》
        "\xe3\x80\x89",  // 〉
        "\xef\xbc\x89",  // ）
        "\xe3\x80\x91",  // 】
    };
    for (auto q : closers) {
        if (cp == q) return true;
    }
    return false;
}

std::vector<std::string> segment_zh(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    std::size_t i = 0;
    auto flush = [&](std::size_t end_excl) {
        std::string_view sent = trim_whitespace(text.substr(start, end_excl - start));
        if (!sent.empty()) out.emplace_back(sent);
    };
    while (i < text.size()) {
        std::size_t len = utf8_seq_len(static_cast<unsigned char>(text[i]));
        std::string_view cp = text.substr(i, len);
        i += len;
        if (is_zh_terminator(cp)) {
            while (i < text.size()) {
                std::size_t l2 = utf8_seq_len(static_cast<unsigned char>(text[i]));
                if (!is_zh_closer(text.substr(i, l2))) break;
                i += l2;
            }
            flush(i);
            start = i;
        }
    }
    flush(text.size());
    return out;
}

[[noreturn]] void line_error(int line_no, const std::string& what) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": " + what);
}

const json& require_field(const json& j, const char* key, int line_no) {
    auto it = j.find(key);
    if (it == j.end()) line_error(line_no, std::string("missing field \"") + key + "\"");
    return *it;
}

int require_index(const json& j, const char* key, int line_no, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer() || it->get<long long>() < 0) {
        line_error(line_no, ctx + ": \"" + key + "\" must be a non-negative integer");
    }
    return static_cast<int>(it->get<long long>());
}

std::vector<ProvenanceLink> parse_links(const json& arr, int line_no, const std::string& ctx) {
    if (!arr.is_array()) line_error(line_no, ctx + " must be an array");
    std::vector<ProvenanceLink> links;
    std::set<std::pair<int, SentenceRef>> seen;
    for (const auto& item : arr) {
        if (!item.is_object()) line_error(line_no, ctx + ": link must be an object");
        ProvenanceLink link;
        link.target_idx = require_index(item, "target_idx", line_no, ctx);
        link.source.doc_idx = require_index(item, "doc_idx", line_no, ctx);
        link.source.sent_idx = require_index(item, "sent_idx", line_no, ctx);
        const json& rel = require_field(item, "relation", line_no);
        if (!rel.is_string()) line_error(line_no, ctx + ": \"relation\" must be a string");
        try {
            link.relation = relation_from_string(rel.get<std::string>());
        } catch (const std::exception& e) {
            line_error(line_no, ctx + ": " + e.what());
        }
        if (!seen.insert({link.target_idx, link.source}).second) {
            line_error(line_no, ctx + ": duplicate (target_idx, source) pair");
        }
        links.push_back(link);
    }
    return links;
}

void validate_link_ranges(const std::vector<ProvenanceLink>& links, const Example& ex,
                          const std::string& what) {
    for (const auto& link : links) {
        if (link.target_idx >= static_cast<int>(ex.targets.size())) {
            throw std::runtime_error("example \"" + ex.id + "\": " + what + " target_idx " +
                                     std::to_string(link.target_idx) + " out of range (" +
                                     std::to_string(ex.targets.size()) + " targets)");
        }
        if (link.source.doc_idx >= static_cast<int>(ex.documents.size())) {
            throw std::runtime_error("example \"" + ex.id + "\": " + what + " doc_idx " +
                                     std::to_string(link.source.doc_idx) + " out of range (" +
                                     std::to_string(ex.documents.size()) + " documents)");
        }
        const auto& sentences = ex.documents[link.source.doc_idx].sentences;
        if (link.source.sent_idx >= static_cast<int>(sentences.size())) {
            throw std::runtime_error("example \"" + ex.id + "\": " + what + " sent_idx " +
                                     std::to_string(link.source.sent_idx) + " out of range (" +
                                     std::to_string(sentences.size()) + " sentences in document " +
                                     std::to_string(link.source.doc_idx) + ")");
        }
    }
}

Example parse_example(const json& j, int line_no) {
    if (!j.is_object()) line_error(line_no, "example must be a JSON object");
    Example ex;
    const json& id = require_field(j, "id", line_no);
    if (!id.is_string()) line_error(line_no, "\"id\" must be a string");
    ex.id = id.get<std::string>();

    const json& lang = require_field(j, "language", line_no);
    if (!lang.is_string()) line_error(line_no, "\"language\" must be a string");
    try {
        ex.language = language_from_string(lang.get<std::string>());
    } catch (const std::exception& e) {
        line_error(line_no, e.what());
    }

    const json& scenario = require_field(j, "scenario", line_no);
    if (!scenario.is_string()) line_error(line_no, "\"scenario\" must be a string");
    ex.scenario = scenario.get<std::string>();

    const json& docs = require_field(j, "documents", line_no);
    if (!docs.is_array()) line_error(line_no, "\"documents\" must be an array");
    for (const auto& d : docs) {
        if (!d.is_object()) line_error(line_no, "document must be an object");
        Document doc;
        doc.language = ex.language;
        auto text_it = d.find("text");
        auto sents_it = d.find("sentences");
        if (text_it != d.end()) {
            if (!text_it->is_string()) line_error(line_no, "document \"text\" must be a string");
            doc.raw_text = text_it->get<std::string>();
        }
        if (sents_it != d.end()) {
            if (!sents_it->is_array()) line_error(line_no, "document \"sentences\" must be an array");
            for (const auto& s : *sents_it) {
                if (!s.is_string()) line_error(line_no, "document sentence must be a string");
                std::string sent = s.get<std::string>();
                if (trim_whitespace(sent).empty()) {
                    line_error(line_no, "document sentence must not be empty");
                }
                doc.sentences.push_back(std::move(sent));
            }
        }
        if (text_it == d.end() && sents_it == d.end()) {
            line_error(line_no, "document needs \"text\" or \"sentences\"");
        }
        if (doc.sentences.empty() && !doc.raw_text.empty()) {
            doc.sentences = segment_sentences(doc.raw_text, ex.language);
        } else if (doc.raw_text.empty() && !doc.sentences.empty()) {
            // pre-segmented input: reconstruct the raw text
            std::string joined;
            for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
                if (i) joined += '\n';
                joined += doc.sentences[i];
            }
            doc.raw_text = std::move(joined);
        } else if (!doc.raw_text.empty() && !doc.sentences.empty()) {
            std::string joined;
            for (const auto& s : doc.sentences) joined += s;
            if (strip_whitespace(joined) != strip_whitespace(doc.raw_text)) {
                line_error(line_no,
                           "document \"sentences\" do not reproduce \"text\" "
                           "(non-whitespace characters differ)");
            }
        }
        ex.documents.push_back(std::move(doc));
    }

    const json& targets = require_field(j, "targets", line_no);
    if (!targets.is_array() || targets.empty()) {
        line_error(line_no, "\"targets\" must be a non-empty array");
    }
    for (const auto& t : targets) {
        if (!t.is_string()) line_error(line_no, "target must be a string");
        ex.targets.push_back(t.get<std::string>());
    }

    if (auto it = j.find("gold"); it != j.end() && !it->is_null()) {
        ex.gold = parse_links(*it, line_no, "gold");
        validate_link_ranges(*ex.gold, ex, "gold link");
    }

    std::tie(ex.length_bucket, ex.doc_class) = bucketize_example(ex);
    return ex;
}

json links_to_json(const std::vector<ProvenanceLink>& links) {
    json arr = json::array();
    for (const auto& link : links) {
        arr.push_back({{"target_idx", link.target_idx},
                       {"doc_idx", link.source.doc_idx},
                       {"sent_idx", link.source.sent_idx},
                       {"relation", std::string(to_string(link.relation))}});
    }
    return arr;
}

template <typename Fn>
void for_each_jsonl_line(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_whitespace(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            line_error(line_no, std::string("invalid JSON: ") + e.what());
        }
        fn(j, line_no);
    }
}

}  // namespace

std::size_t Example::total_sentences() const {
    std::size_t n = 0;
    for (const auto& doc : documents) n += doc.sentences.size();
    return n;
}

bool Example::contains(SentenceRef ref) const {
    return ref.doc_idx >= 0 && ref.doc_idx < static_cast<int>(documents.size()) &&
           ref.sent_idx >= 0 &&
           ref.sent_idx < static_cast<int>(documents[ref.doc_idx].sentences.size());
}

const std::string& Example::sentence_text(SentenceRef ref) const {
    if (!contains(ref)) {
        throw std::out_of_range("example \"" + id + "\": no sentence (" +
                                std::to_string(ref.doc_idx) + ", " +
                                std::to_string(ref.sent_idx) + ")");
    }
    return documents[ref.doc_idx].sentences[ref.sent_idx];
}

std::string_view to_string(Language lang) {
    return lang == Language::EN ? "en" : "zh";
}

std::string_view to_string(RelationType rel) {
    switch (rel) {
        case RelationType::Quotation: return "quotation";
        case RelationType::Compression: return "compression";
        case RelationType::Inference: return "inference";
        case RelationType::Other: return "other";
    }
    return "other";
}

std::string_view to_string(LengthBucket bucket) {
    switch (bucket) {
        case LengthBucket::B0_5K: return "0-5k";
        case LengthBucket::B5_10K: return "5-10k";
        case LengthBucket::B10K_PLUS: return "10k+";
    }
    return "0-5k";
}

std::string_view to_string(DocClass cls) {
    return cls == DocClass::Single ? "single" : "multi";
}

Language language_from_string(std::string_view s) {
    if (s == "en") return Language::EN;
    if (s == "zh") return Language::ZH;
    throw std::runtime_error("unknown language \"" + std::string(s) + "\" (expected \"en\" or \"zh\")");
}

RelationType relation_from_string(std::string_view s) {
    if (s == "quotation") return RelationType::Quotation;
    if (s == "compression") return RelationType::Compression;
    if (s == "inference") return RelationType::Inference;
    if (s == "other") return RelationType::Other;
    throw std::runtime_error("unknown relation \"" + std::string(s) + "\"");
}

std::vector<std::string> segment_sentences(std::string_view text, Language language) {
    return language == Language::EN ? segment_en(text) : segment_zh(text);
}

std::vector<std::string> tokenize(std::string_view sentence, Language language) {
    std::vector<std::string> out;
    if (language == Language::EN) {
        // typographic punctuation also breaks tokens; accented letters do not
        static const std::unordered_set<std::string_view> wide_punct = {
            "\xe2\x80\x98", "\xe2\x80\x99", "\xe2\x80\x9c", "\xe2\x80\x9d", "\xe2\x80\x93",
            "\xe2\x80\x94", "\xe2\x80\xa6", "\xc2\xab",     "\xc2\xbb",     "\xe3\x80\x81",
            "\xe3\x80\x82", "\xef\xbc\x81", "\xef\xbc\x9f", "\xef\xbc\x9b", "\xef\xbc\x9a",
            "\xef\xbc\x8c", "\xe3\x80\x8c", "\xe3\x80\x8d", "\xe3\x80\x8e", "\xe3\x80\x8f",
            "\xef\xbc\x88", "\xef\xbc\x89", "\xe3\x80\x90", "\xe3\x80\x91", "\xe3\x80\x8a",
            "\xe3\x80\x8b", "\xe3\x80\x80",
        };
        std::string current;
        auto flush = [&] {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        };
        std::size_t i = 0;
        while (i < sentence.size()) {
            unsigned char uc = static_cast<unsigned char>(sentence[i]);
            if (uc < 0x80) {
                if (is_ascii_space(sentence[i]) || std::ispunct(uc)) {
                    flush();
                } else {
                    current.push_back(static_cast<char>(std::tolower(uc)));
                }
                ++i;
                continue;
            }
            std::size_t len = utf8_seq_len(uc);
            std::string_view cp = sentence.substr(i, len);
            if (wide_punct.count(cp) != 0) {
                flush();
            } else {
                current.append(cp);
            }
            i += len;
        }
        flush();
    } else {
        std::size_t i = 0;
        while (i < sentence.size()) {
            std::size_t len = utf8_seq_len(static_cast<unsigned char>(sentence[i]));
            std::string_view cp = sentence.substr(i, len);
            i += len;
            if (!is_space_codepoint(cp)) out.emplace_back(cp);
        }
    }
    return out;
}

std::size_t text_length_units(std::string_view text, Language language) {
    std::size_t count = 0;
    if (language == Language::EN) {
        bool in_word = false;
        for (char c : text) {
            if (is_ascii_space(c)) {
                in_word = false;
            } else if (!in_word) {
                in_word = true;
                ++count;
            }
        }
    } else {
        std::size_t i = 0;
        while (i < text.size()) {
            std::size_t len = utf8_seq_len(static_cast<unsigned char>(text[i]));
            if (!is_space_codepoint(text.substr(i, len))) ++count;
            i += len;
        }
    }
    return count;
}

std::pair<LengthBucket, DocClass> bucketize_example(const Example& example) {
    std::size_t total = 0;
    for (const auto& doc : example.documents) {
        total += text_length_units(doc.raw_text, example.language);
    }
    LengthBucket bucket = total < 5000    ? LengthBucket::B0_5K
                          : total < 10000 ? LengthBucket::B5_10K
                                          : LengthBucket::B10K_PLUS;
    DocClass cls = example.documents.size() >= 2 ? DocClass::Multi : DocClass::Single;
    return {bucket, cls};
}

std::vector<Example> load_dataset(const std::string& path) {
    std::vector<Example> out;
    for_each_jsonl_line(path, [&](const json& j, int line_no) {
        out.push_back(parse_example(j, line_no));
    });
    return out;
}

void save_dataset(const std::vector<Example>& examples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (const auto& ex : examples) {
        json docs = json::array();
        for (const auto& doc : ex.documents) {
            docs.push_back({{"text", doc.raw_text}, {"sentences", doc.sentences}});
        }
        json j = {{"id", ex.id},
                  {"language", std::string(to_string(ex.language))},
                  {"scenario", ex.scenario},
                  {"documents", std::move(docs)},
                  {"targets", ex.targets}};
        if (ex.gold) j["gold"] = links_to_json(*ex.gold);
        out << j.dump() << '\n';
    }
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
    std::vector<PredictionRecord> out;
    for_each_jsonl_line(path, [&](const json& j, int line_no) {
        if (!j.is_object()) line_error(line_no, "prediction must be a JSON object");
        PredictionRecord rec;
        const json& id = require_field(j, "id", line_no);
        if (!id.is_string()) line_error(line_no, "\"id\" must be a string");
        rec.id = id.get<std::string>();
        rec.links = parse_links(require_field(j, "links", line_no), line_no, "links");
        if (auto it = j.find("method"); it != j.end() && it->is_string()) {
            rec.method = it->get<std::string>();
        }
        if (auto it = j.find("warnings"); it != j.end() && it->is_number_integer()) {
            rec.warnings = it->get<int>();
        }
        if (auto it = j.find("chat_calls"); it != j.end() && it->is_number_integer()) {
            rec.chat_calls = it->get<int>();
        }
        out.push_back(std::move(rec));
    });
    return out;
}

void save_predictions(const std::vector<PredictionRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (const auto& rec : records) {
        json j = {{"id", rec.id},
                  {"method", rec.method},
                  {"links", links_to_json(rec.links)},
                  {"warnings", rec.warnings},
                  {"chat_calls", rec.chat_calls}};
        out << j.dump() << '\n';
    }
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
    std::vector<AnnotationRecord> out;
    for_each_jsonl_line(path, [&](const json& j, int line_no) {
        if (!j.is_object()) line_error(line_no, "annotation must be a JSON object");
        AnnotationRecord rec;
        const json& id = require_field(j, "id", line_no);
        if (!id.is_string()) line_error(line_no, "\"id\" must be a string");
        rec.id = id.get<std::string>();
        rec.links = parse_links(require_field(j, "links", line_no), line_no, "links");
        if (auto it = j.find("modified"); it != j.end() && !it->is_null()) {
            if (!it->is_array()) line_error(line_no, "\"modified\" must be an array of booleans");
            std::vector<bool> flags;
            for (const auto& b : *it) {
                if (!b.is_boolean()) line_error(line_no, "\"modified\" must be an array of booleans");
                flags.push_back(b.get<bool>());
            }
            rec.modified = std::move(flags);
        }
        out.push_back(std::move(rec));
    });
    return out;
}

}  // namespace trove
