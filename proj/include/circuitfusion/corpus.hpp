#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "circuitfusion/subcircuit.hpp"

namespace cfusion {

/// Word-level vocabulary. Ids 0..4 are the special tokens.
class Vocab {
public:
    static constexpr int kCls = 0;
    static constexpr int kMask = 1;
    static constexpr int kPad = 2;
    static constexpr int kSep = 3;
    static constexpr int kUnk = 4;
    static constexpr int kSpecialCount = 5;

    Vocab();

    [[nodiscard]] int size() const { return static_cast<int>(tokens_.size()); }
    [[nodiscard]] int id(std::string_view token) const;  // kUnk when absent
    [[nodiscard]] const std::string& token(int id) const;
    [[nodiscard]] bool contains(std::string_view token) const;

    /// Appends a token if new; returns its id.
    int add(const std::string& token);

    [[nodiscard]] nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Alphanumeric runs are words; every other non-space character is a token
/// on its own, so "cnt[3]" splits into cnt [ 3 ].
std::vector<std::string> split_words(std::string_view text);

/// Tokens seen at least `min_count` times, ordered by (count desc, token asc).
Vocab build_vocab(const std::vector<std::string>& texts, int min_count);
/// Vocabulary over the code and summary text of every bundle in a JSONL corpus.
Vocab build_vocab(const std::string& corpus_path, int min_count);

/// [CLS] followed by word ids, truncated to max_len. Never emits [MASK].
std::vector<int> tokenize(std::string_view text, const Vocab& vocab, int max_len);
/// Space-joined tokens; specials other than [UNK] are dropped.
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

inline constexpr int kSummaryMaxTokens = 128;
inline constexpr int kCodeMaxTokens = 1024;

struct SummaryRequest {
    std::string code;
    std::string template_id = "functionality_v1";
    int max_tokens = kSummaryMaxTokens;
};

/// Prompt text for a template id; has a functionality section and an
/// implementation-details section. Throws std::invalid_argument when unknown.
std::string prompt_template(std::string_view template_id);

/// Deterministic rule-based summary of a cone: root register, top operator,
/// boundary signals, operator histogram and conditional structure.
std::string offline_summary(const Cone& cone);

struct SummarizerConfig {
    std::string url;  // http://host:port/path
    std::string key;  // sent as a bearer token when non-empty
    std::string model = "summarizer";
    int max_retries = 3;  // attempts after the first
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::milliseconds max_backoff{5000};
    std::chrono::milliseconds timeout{30000};
    int concurrency = 4;

    /// Reads SUMMARIZER_URL / SUMMARIZER_KEY; nullopt when no URL is set.
    static std::optional<SummarizerConfig> from_env();
};

/// JSON-over-HTTP summarizer. Requests carry {model, prompt, input, code,
/// max_tokens}; the reply must be {"text": ...}.
class SummarizerClient {
public:
    explicit SummarizerClient(SummarizerConfig config);

    /// One request with retries and exponential backoff. Throws HttpError,
    /// Timeout or MalformedResponse once retries are exhausted.
    std::string summarize(const SummaryRequest& req) const;

    /// Many requests with at most `concurrency` in flight; results keep input order.
    std::vector<std::string> summarize_all(const std::vector<SummaryRequest>& reqs) const;

    [[nodiscard]] const SummarizerConfig& config() const { return config_; }

private:
    std::string attempt(const SummaryRequest& req) const;

    SummarizerConfig config_;
    std::string scheme_host_port_;
    std::string path_;
};

/// Summary for a bundle: the client when given, otherwise the offline template.
std::string summarize(const SummaryRequest& req, const Cone& cone, const SummarizerClient* client);

}  // namespace cfusion
