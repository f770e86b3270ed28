#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace trove {

/// Connection settings for an OpenAI-compatible endpoint. `api_key_env`
/// names the environment variable holding the key; an empty value in that
/// variable means "no Authorization header". The scheme `builtin:` selects
/// the offline hashed-n-gram embedder.
struct ProviderConfig {
    std::string base_url;
    std::string model_name;
    std::string api_key_env;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};
    int max_in_flight = 4;
    int batch_size = 16;      // embedding texts per upstream request
    std::string cache_dir;    // empty: in-memory cache only
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Minimal POST-a-JSON-body transport; swapped out for a fake in tests.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post_json(const std::string& url, const std::string& body,
                                   const std::vector<std::pair<std::string, std::string>>& headers,
                                   std::chrono::milliseconds timeout) = 0;
};

std::shared_ptr<HttpTransport> make_default_transport();

struct ProviderStats {
    long long cache_hits = 0;
    long long network_calls = 0;
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    virtual ProviderStats stats() const { return {}; }
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Returns one L2-normalized vector per input text.
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual ProviderStats stats() const { return {}; }
};

/// OpenAI-compatible /chat/completions client with retries, exponential
/// backoff, and write-once response caching.
std::unique_ptr<ChatProvider> make_http_chat_provider(ProviderConfig config,
                                                      std::shared_ptr<HttpTransport> transport = nullptr);

/// Replays canned replies from a JSONL file of
/// {"prompt_digest": sha256-hex, "reply": str} (or {"prompt": str, "reply": str});
/// unmapped prompts get an empty reply.
std::unique_ptr<ChatProvider> make_mock_chat_provider(const std::string& jsonl_path);

/// OpenAI-compatible /embeddings client (batched, cached, normalized), or the
/// builtin embedder when config.base_url starts with "builtin:".
std::unique_ptr<EmbeddingProvider> make_embedding_provider(ProviderConfig config,
                                                           std::shared_ptr<HttpTransport> transport = nullptr);

/// Deterministic offline embedder: hashed character n-gram (n = 1..3)
/// frequencies over the UTF-8 bytes, dimension 256, L2-normalized.
std::unique_ptr<EmbeddingProvider> make_builtin_embedder();

}  // namespace trove
