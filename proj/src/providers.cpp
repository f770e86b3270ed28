#include "trove/providers.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "trove/digest.hpp"

namespace trove {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post_json(const std::string& url, const std::string& body,
                           const std::vector<std::pair<std::string, std::string>>& headers,
                           std::chrono::milliseconds timeout) override {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            throw std::runtime_error("invalid URL (missing scheme): " + url);
        }
        auto path_start = url.find('/', scheme_end + 3);
        std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(origin);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout));
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(path, h, body, "application/json");
        if (!res) {
            throw std::runtime_error("connection to " + origin +
                                     " failed: " + httplib::to_string(res.error()));
        }
        return {res->status, res->body};
    }
};

/// Write-once key/value store: in-memory map plus optional on-disk files
/// named by key (temp-write-then-rename).
class ResponseCache {
public:
    explicit ResponseCache(std::string dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) fs::create_directories(dir_);
    }

    std::optional<std::string> get(const std::string& key) {
        {
            std::lock_guard lock(mutex_);
            if (auto it = memory_.find(key); it != memory_.end()) return it->second;
        }
        if (dir_.empty()) return std::nullopt;
        std::ifstream in(file_for(key), std::ios::binary);
        if (!in) return std::nullopt;
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string value = buf.str();
        std::lock_guard lock(mutex_);
        memory_.emplace(key, value);
        return value;
    }

    void put(const std::string& key, const std::string& value) {
        {
            std::lock_guard lock(mutex_);
            if (!memory_.emplace(key, value).second) return;  // write-once
        }
        if (dir_.empty()) return;
        fs::path final_path = file_for(key);
        fs::path tmp = final_path;
        tmp += ".tmp." + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "." +
               std::to_string(counter_.fetch_add(1));
        {
            std::ofstream out(tmp, std::ios::binary);
            out << value;
        }
        std::error_code ec;
        fs::rename(tmp, final_path, ec);
        if (ec) fs::remove(tmp, ec);
    }

private:
    fs::path file_for(const std::string& key) const { return fs::path(dir_) / key; }

    std::string dir_;
    std::mutex mutex_;
    std::unordered_map<std::string, std::string> memory_;
    std::atomic<std::uint64_t> counter_{0};
};

bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

/// Shared retry/backoff/auth plumbing for the HTTP providers.
class HttpEndpoint {
public:
    HttpEndpoint(ProviderConfig config, std::shared_ptr<HttpTransport> transport)
        : config_(std::move(config)),
          transport_(transport ? std::move(transport) : make_default_transport()),
          in_flight_(std::max(1, config_.max_in_flight)) {}

    const ProviderConfig& config() const { return config_; }

    std::string post(const std::string& endpoint_path, const std::string& body) {
        std::vector<std::pair<std::string, std::string>> headers;
        std::string key = api_key();
        if (!key.empty()) headers.emplace_back("Authorization", "Bearer " + key);

        std::string url = config_.base_url;
        while (!url.empty() && url.back() == '/') url.pop_back();
        url += endpoint_path;

        for (int attempt = 0;; ++attempt) {
            std::string failure;
            bool fatal = false;
            try {
                in_flight_.acquire();
                HttpResponse res;
                try {
                    ++network_calls_;
                    res = transport_->post_json(url, body, headers, config_.timeout);
                } catch (...) {
                    in_flight_.release();
                    throw;
                }
                in_flight_.release();
                if (res.status == 200) return res.body;
                failure = "HTTP " + std::to_string(res.status);
                fatal = !retryable_status(res.status);
            } catch (const std::exception& e) {
                failure = e.what();
            }
            if (fatal) {
                throw std::runtime_error("provider error: " + failure + " from " + url);
            }
            if (attempt >= config_.max_retries) {
                throw std::runtime_error("provider error after " + std::to_string(attempt + 1) +
                                         " attempts (" + failure + ") from " + url);
            }
            std::this_thread::sleep_for(config_.backoff_base * (1LL << attempt));
        }
    }

    long long network_calls() const { return network_calls_.load(); }

private:
    std::string api_key() const {
        if (config_.api_key_env.empty()) return {};
        const char* value = std::getenv(config_.api_key_env.c_str());
        if (value == nullptr) {
            throw std::runtime_error("configuration error: environment variable " +
                                     config_.api_key_env + " is not set");
        }
        return value;
    }

    ProviderConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    std::counting_semaphore<1 << 20> in_flight_;
    std::atomic<long long> network_calls_{0};
};

class HttpChatProvider final : public ChatProvider {
public:
    HttpChatProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport)
        : cache_(config.cache_dir), endpoint_(std::move(config), std::move(transport)) {}

    std::string complete(const std::string& prompt) override {
        const std::string key = cache_key("chat", endpoint_.config().model_name, prompt);
        if (auto hit = cache_.get(key)) {
            ++cache_hits_;
            return *hit;
        }
        json payload = {{"model", endpoint_.config().model_name},
                        {"temperature", 0},
                        {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
        std::string body = endpoint_.post("/chat/completions", payload.dump());
        std::string text;
        try {
            json reply = json::parse(body);
            text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("provider error: malformed chat response: ") +
                                     e.what());
        }
        cache_.put(key, text);
        return text;
    }

    ProviderStats stats() const override {
        return {cache_hits_.load(), endpoint_.network_calls()};
    }

private:
    ResponseCache cache_;
    HttpEndpoint endpoint_;
    std::atomic<long long> cache_hits_{0};
};

class MockChatProvider final : public ChatProvider {
public:
    explicit MockChatProvider(const std::string& jsonl_path) {
        std::ifstream in(jsonl_path);
        if (!in) throw std::runtime_error("cannot open mock chat file: " + jsonl_path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error& e) {
                throw std::runtime_error("mock chat file line " + std::to_string(line_no) +
                                         ": invalid JSON: " + e.what());
            }
            std::string digest;
            if (auto it = j.find("prompt_digest"); it != j.end() && it->is_string()) {
                digest = it->get<std::string>();
            } else if (auto pit = j.find("prompt"); pit != j.end() && pit->is_string()) {
                digest = sha256_hex(pit->get<std::string>());
            } else {
                throw std::runtime_error("mock chat file line " + std::to_string(line_no) +
                                         ": needs \"prompt_digest\" or \"prompt\"");
            }
            auto rit = j.find("reply");
            if (rit == j.end() || !rit->is_string()) {
                throw std::runtime_error("mock chat file line " + std::to_string(line_no) +
                                         ": needs string \"reply\"");
            }
            replies_[digest] = rit->get<std::string>();
        }
    }

    std::string complete(const std::string& prompt) override {
        auto it = replies_.find(sha256_hex(prompt));
        return it == replies_.end() ? std::string() : it->second;
    }

private:
    std::unordered_map<std::string, std::string> replies_;
};

constexpr int kBuiltinDim = 256;

std::vector<double> builtin_embed_one(const std::string& text) {
    std::vector<double> v(kBuiltinDim, 0.0);
    const char* data = text.data();
    for (std::size_t n = 1; n <= 3; ++n) {
        if (text.size() < n) break;
        for (std::size_t i = 0; i + n <= text.size(); ++i) {
            v[fnv1a64(data + i, n) % kBuiltinDim] += 1.0;
        }
    }
    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    if (norm_sq < 1e-24) {
        v.assign(kBuiltinDim, 0.0);
        v[0] = 1.0;  // fixed unit vector for empty input
        return v;
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
    return v;
}

class BuiltinEmbedder final : public EmbeddingProvider {
public:
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            {
                std::lock_guard lock(mutex_);
                if (auto it = cache_.find(text); it != cache_.end()) {
                    ++cache_hits_;
                    out.push_back(it->second);
                    continue;
                }
            }
            auto vec = builtin_embed_one(text);
            {
                std::lock_guard lock(mutex_);
                cache_.emplace(text, vec);
            }
            out.push_back(std::move(vec));
        }
        return out;
    }

    ProviderStats stats() const override { return {cache_hits_.load(), 0}; }

private:
    std::mutex mutex_;
    std::unordered_map<std::string, std::vector<double>> cache_;
    std::atomic<long long> cache_hits_{0};
};

void l2_normalize(std::vector<double>& v) {
    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    if (norm_sq < 1e-24) {
        if (!v.empty()) {
            std::fill(v.begin(), v.end(), 0.0);
            v[0] = 1.0;
        }
        return;
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
}

class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport)
        : cache_(config.cache_dir), endpoint_(std::move(config), std::move(transport)) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out(texts.size());
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (auto hit = cache_.get(key_for(texts[i]))) {
                ++cache_hits_;
                out[i] = decode(*hit);
            } else {
                missing.push_back(i);
            }
        }
        const int batch = std::max(1, endpoint_.config().batch_size);
        for (std::size_t pos = 0; pos < missing.size(); pos += batch) {
            std::size_t end = std::min(missing.size(), pos + batch);
            std::vector<std::string> inputs;
            for (std::size_t k = pos; k < end; ++k) inputs.push_back(texts[missing[k]]);
            auto vectors = request_batch(inputs);
            for (std::size_t k = pos; k < end; ++k) {
                auto& vec = vectors[k - pos];
                l2_normalize(vec);
                cache_.put(key_for(texts[missing[k]]), encode(vec));
                out[missing[k]] = std::move(vec);
            }
        }
        return out;
    }

    ProviderStats stats() const override {
        return {cache_hits_.load(), endpoint_.network_calls()};
    }

private:
    std::string key_for(const std::string& text) const {
        return cache_key("embed", endpoint_.config().model_name, text);
    }

    static std::string encode(const std::vector<double>& v) { return json(v).dump(); }

    static std::vector<double> decode(const std::string& s) {
        return json::parse(s).get<std::vector<double>>();
    }

    std::vector<std::vector<double>> request_batch(const std::vector<std::string>& inputs) {
        json payload = {{"model", endpoint_.config().model_name}, {"input", inputs}};
        std::string body = endpoint_.post("/embeddings", payload.dump());
        std::vector<std::vector<double>> vectors(inputs.size());
        std::size_t dim = 0;
        try {
            json reply = json::parse(body);
            const json& data = reply.at("data");
            if (data.size() != inputs.size()) {
                throw std::runtime_error("expected " + std::to_string(inputs.size()) +
                                         " embeddings, got " + std::to_string(data.size()));
            }
            for (std::size_t i = 0; i < data.size(); ++i) {
                const json& item = data[i];
                std::size_t slot = item.contains("index") ? item.at("index").get<std::size_t>() : i;
                if (slot >= vectors.size()) throw std::runtime_error("embedding index out of range");
                vectors[slot] = item.at("embedding").get<std::vector<double>>();
            }
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("provider error: malformed embedding response: ") +
                                     e.what());
        }
        for (const auto& v : vectors) {
            if (dim == 0) dim = v.size();
            if (v.empty() || v.size() != dim) {
                throw std::runtime_error("provider error: inconsistent embedding dimensions in batch");
            }
        }
        return vectors;
    }

    ResponseCache cache_;
    HttpEndpoint endpoint_;
    std::atomic<long long> cache_hits_{0};
};

}  // namespace

std::shared_ptr<HttpTransport> make_default_transport() {
    return std::make_shared<HttplibTransport>();
}

std::unique_ptr<ChatProvider> make_http_chat_provider(ProviderConfig config,
                                                      std::shared_ptr<HttpTransport> transport) {
    if (config.base_url.empty()) {
        throw std::runtime_error("configuration error: chat provider base URL is empty");
    }
    return std::make_unique<HttpChatProvider>(std::move(config), std::move(transport));
}

std::unique_ptr<ChatProvider> make_mock_chat_provider(const std::string& jsonl_path) {
    return std::make_unique<MockChatProvider>(jsonl_path);
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(ProviderConfig config,
                                                           std::shared_ptr<HttpTransport> transport) {
    if (config.base_url.rfind("builtin:", 0) == 0) return make_builtin_embedder();
    if (config.base_url.empty()) {
        throw std::runtime_error("configuration error: embedding provider base URL is empty");
    }
    return std::make_unique<HttpEmbeddingProvider>(std::move(config), std::move(transport));
}

std::unique_ptr<EmbeddingProvider> make_builtin_embedder() {
    return std::make_unique<BuiltinEmbedder>();
}

}  // namespace trove
