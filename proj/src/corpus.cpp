#include "circuitfusion/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace cfusion {

namespace {
constexpr const char* kSpecials[] = {"[CLS]", "[MASK]", "[PAD]", "[SEP]", "[UNK]"};
}

Vocab::Vocab() {
    for (const char* s : kSpecials) add(s);
}

int Vocab::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

bool Vocab::contains(std::string_view token) const { return index_.contains(std::string(token)); }

int Vocab::add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, size());
    if (inserted) tokens_.push_back(token);
    return it->second;
}

nlohmann::json Vocab::to_json() const { return {{"tokens", tokens_}}; }

Vocab Vocab::from_json(const nlohmann::json& j) {
    const auto tokens = j.at("tokens").get<std::vector<std::string>>();
    if (tokens.size() < kSpecialCount ||
        !std::equal(std::begin(kSpecials), std::end(kSpecials), tokens.begin())) {
        throw std::invalid_argument("vocab file does not start with the special tokens");
    }
    Vocab v;
    for (std::size_t i = kSpecialCount; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("corpus", "cannot write " + path);
    out << to_json().dump() << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("corpus", "cannot read " + path);
    return from_json(nlohmann::json::parse(in));
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
        } else if (std::isalnum(c)) {
            std::size_t j = i;
            while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
            out.emplace_back(text.substr(i, j - i));
            i = j;
        } else {
            out.emplace_back(1, text[i]);
            ++i;
        }
    }
    return out;
}

Vocab build_vocab(const std::vector<std::string>& texts, int min_count) {
    std::map<std::string, int> counts;
    for (const auto& t : texts)
        for (auto& w : split_words(t)) ++counts[w];
    std::vector<std::pair<std::string, int>> kept;
    for (auto& [w, c] : counts)
        if (c >= min_count) kept.emplace_back(w, c);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab v;
    for (auto& [w, c] : kept) v.add(w);
    return v;
}

Vocab build_vocab(const std::string& corpus_path, int min_count) {
    std::vector<std::string> texts;
    for (const auto& b : read_corpus(corpus_path)) {
        texts.push_back(b.code);
        texts.push_back(b.summary);
    }
    return build_vocab(texts, min_count);
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab, int max_len) {
    if (max_len < 2) throw std::invalid_argument("tokenize: max_len must be >= 2");
    std::vector<int> ids{Vocab::kCls};
    for (const auto& w : split_words(text)) {
        if (static_cast<int>(ids.size()) >= max_len) break;
        const int id = vocab.id(w);
        ids.push_back(id == Vocab::kMask ? Vocab::kUnk : id);
    }
    return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
    std::string out;
    for (int id : ids) {
        if (id < Vocab::kSpecialCount && id != Vocab::kUnk) continue;
        if (!out.empty()) out += ' ';
        out += vocab.token(id);
    }
    return out;
}

std::string prompt_template(std::string_view template_id) {
    if (template_id == "functionality_v1") {
        return "You are given a Verilog sub-circuit that computes the next state of one register.\n"
               "Functionality: describe in one or two sentences what value the register takes each cycle.\n"
               "Implementation details: list the main operators, the signals it reads and any "
               "conditions that select between values.\n"
               "Answer in plain text.";
    }
    throw std::invalid_argument("unknown prompt template: " + std::string(template_id));
}

namespace {

std::string join(const std::vector<std::string>& xs, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        out += xs[i];
    }
    return out;
}

std::string plural(std::string_view word, std::size_t n) {
    if (n == 1) return std::string(word);
    return std::string(word) + (word.ends_with("ch") || word.ends_with("s") ? "es" : "s");
}

std::string kind_of(const Node& n) { return n.op == Op::Input ? "input" : "register"; }

}  // namespace

std::string offline_summary(const Cone& cone) {
    const CdfGraph& g = cone.graph;
    const Node& root = cone.root_node();
    std::ostringstream s;
    s << (cone.is_output_cone ? "Output " : "Register ") << root.name;
    if (root.width > 1) s << " (" << root.width << " bits)";
    s << " updates with ";

    const auto drivers = g.operands(cone.root);
    if (drivers.empty()) return s.str() + "no driver.";
    const Node& d = g.node(drivers.front());
    const bool is_boundary = std::binary_search(cone.boundary.begin(), cone.boundary.end(), d.id);
    if (is_boundary) {
        s << "the value of " << kind_of(d) << ' ' << d.name << '.';
    } else if (d.op == Op::Const) {
        s << "the constant " << d.value << '.';
    } else {
        const auto ops = g.operands(d.id);
        bool all_boundary = true;
        std::set<std::string> kinds;
        std::vector<std::string> names;
        for (NodeId o : ops) {
            if (!std::binary_search(cone.boundary.begin(), cone.boundary.end(), o)) {
                all_boundary = false;
                break;
            }
            kinds.insert(kind_of(g.node(o)));
            names.push_back(g.node(o).name);
        }
        s << "the " << op_name(d.op) << " of ";
        if (all_boundary) {
            s << (kinds.size() == 1 ? plural(*kinds.begin(), names.size()) : std::string("signals")) << ' '
              << join(names, ", ") << '.';
        } else {
            s << ops.size() << ' ' << plural("term", ops.size()) << '.';
        }
        if (all_boundary && cone.members.size() == 1) return s.str();
    }

    std::vector<std::string> inputs, regs;
    for (NodeId b : cone.boundary) (g.node(b).op == Op::Input ? inputs : regs).push_back(g.node(b).name);
    if (!inputs.empty() || !regs.empty()) {
        s << " It reads ";
        if (!inputs.empty()) s << plural("input", inputs.size()) << ' ' << join(inputs, ", ");
        if (!inputs.empty() && !regs.empty()) s << " and ";
        if (!regs.empty()) s << plural("register", regs.size()) << ' ' << join(regs, ", ");
        s << '.';
    }
    std::map<Op, int> hist;
    for (NodeId m : cone.members)
        if (g.node(m).op != Op::Const) ++hist[g.node(m).op];
    if (!hist.empty()) {
        std::vector<std::string> parts;
        for (auto [op, n] : hist) parts.push_back(std::to_string(n) + ' ' + std::string(op_name(op)));
        s << " Its logic contains " << join(parts, ", ") << '.';
    }
    if (const auto mux = hist.find(Op::Mux); mux != hist.end()) {
        s << " The update is selected by " << mux->second << " conditional " << plural("branch", mux->second)
          << '.';
    }
    return s.str();
}

std::optional<SummarizerConfig> SummarizerConfig::from_env() {
    const char* url = std::getenv("SUMMARIZER_URL");
    if (!url || !*url) return std::nullopt;
    SummarizerConfig c;
    c.url = url;
    if (const char* key = std::getenv("SUMMARIZER_KEY")) c.key = key;
    return c;
}

SummarizerClient::SummarizerClient(SummarizerConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = config_.url.find('/', host_start);
    scheme_host_port_ = config_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
    if (config_.concurrency < 1) config_.concurrency = 1;
}

std::string SummarizerClient::attempt(const SummaryRequest& req) const {
    httplib::Client cli(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config_.key.empty()) headers.emplace("Authorization", "Bearer " + config_.key);

    const nlohmann::json body = {
        {"model", config_.model},
        {"prompt", prompt_template(req.template_id)},
        {"input", req.code},
        {"code", req.code},
        {"max_tokens", req.max_tokens},
    };
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
            throw Timeout(httplib::to_string(err));
        }
        throw HttpError(0);
    }
    if (res->status < 200 || res->status >= 300) throw HttpError(res->status);
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedResponse(e.what());
    }
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
        throw MalformedResponse("missing string field 'text'");
    }
    return reply["text"].get<std::string>();
}

std::string SummarizerClient::summarize(const SummaryRequest& req) const {
    auto backoff = config_.initial_backoff;
    for (int attempt_no = 0;; ++attempt_no) {
        try {
            return attempt(req);
        } catch (const Error&) {
            if (attempt_no >= config_.max_retries) throw;
        }
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, config_.max_backoff);
    }
}

std::vector<std::string> SummarizerClient::summarize_all(const std::vector<SummaryRequest>& reqs) const {
    std::vector<std::string> out(reqs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < reqs.size();) {
            try {
                out[i] = summarize(reqs[i]);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = reqs.size();
            }
        }
    };
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(config_.concurrency), reqs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::string summarize(const SummaryRequest& req, const Cone& cone, const SummarizerClient* client) {
    if (client) return client->summarize(req);
    return offline_summary(cone);
}

}  // namespace cfusion
