#include "uitasker/lm_backend.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "uitasker/errors.hpp"

// cpp-httplib is header-only; keep it out of our public headers.
#define CPPHTTPLIB_OPENSSL_SUPPORT_DISABLED
#include <httplib.h>

namespace uitasker {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool starts_with_keyword(const std::string& line, const char* keyword, std::string& rest) {
    size_t klen = std::string(keyword).size();
    if (line.size() < klen) return false;
    for (size_t i = 0; i < klen; ++i) {
        if (std::toupper(static_cast<unsigned char>(line[i])) != keyword[i]) return false;
    }
    rest = trim(line.substr(klen));
    return true;
}

}  // namespace

LmResponse split_response(const std::string& raw) {
    LmResponse r;
    r.raw = raw;
    std::vector<std::string> lines = split_lines(raw);
    std::string rest;
    bool in_result = false;
    std::string thought;
    std::string result;
    for (const auto& line : lines) {
        if (starts_with_keyword(trim(line), "RESULT:", rest)) {
            in_result = true;
            result = rest;
            continue;
        }
        if (starts_with_keyword(trim(line), "THOUGHT:", rest)) {
            in_result = false;
            thought = rest;
            continue;
        }
        if (in_result) {
            result += "\n" + line;
        } else if (!thought.empty()) {
            thought += "\n" + line;
        }
    }
    r.chain_of_thought = trim(thought);
    r.result_block = in_result ? trim(result) : trim(raw);
    return r;
}

// --- mock --------------------------------------------------------------------

MockBackend::MockBackend(std::vector<ScriptEntry> script) : script_(std::move(script)) {}

std::vector<ScriptEntry> MockBackend::parse_script(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw SpecError(std::string("invalid scenario script: ") + e.what());
    }
    if (!doc.is_array()) throw SpecError("scenario script must be a JSON array");
    std::vector<ScriptEntry> entries;
    for (const auto& item : doc) {
        if (!item.is_object() || !item.contains("kind") || !item.contains("response"))
            throw SpecError("scenario entries need kind and response fields");
        auto kind = prompt_kind_from_string(item.at("kind").get<std::string>());
        if (!kind)
            throw SpecError("unknown prompt kind '" + item.at("kind").get<std::string>() + "'");
        entries.push_back(ScriptEntry{*kind, item.at("response").get<std::string>()});
    }
    return entries;
}

MockBackend MockBackend::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario script " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return MockBackend(parse_script(buf.str()));
}

LmResponse MockBackend::complete(const Prompt& prompt) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (next_ >= script_.size())
        throw ScriptExhausted("scenario script exhausted after " +
                              std::to_string(script_.size()) + " entries (next prompt: " +
                              to_string(prompt.kind) + ")");
    const ScriptEntry& entry = script_[next_];
    if (entry.expected_kind != prompt.kind)
        throw ScriptMismatch("scenario step " + std::to_string(next_) + " expected a " +
                             to_string(entry.expected_kind) + " prompt, got " +
                             to_string(prompt.kind));
    ++next_;
    return split_response(entry.response);
}

size_t MockBackend::calls_made() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return next_;
}

size_t MockBackend::entries_left() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return script_.size() - next_;
}

// --- http --------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

HttpBackend HttpBackend::from_environment() {
    HttpBackendConfig cfg;
    if (const char* ep = std::getenv("UITASKER_LM_ENDPOINT")) cfg.endpoint = ep;
    if (const char* key = std::getenv("UITASKER_LM_API_KEY")) cfg.api_key = key;
    if (const char* model = std::getenv("UITASKER_LM_MODEL")) cfg.model = model;
    if (cfg.endpoint.empty())
        throw InvalidArgument("UITASKER_LM_ENDPOINT is not set");
    return HttpBackend(cfg);
}

LmResponse HttpBackend::complete(const Prompt& prompt) {
    json body = {
        {"model", config_.model},
        {"messages", json::array({json{{"role", "user"}, {"content", prompt.render()}}})},
    };
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_error = "transport failure";
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.backoff_ms * (1 << (attempt - 1))));
        }
        auto res = client.Post(config_.path, headers, body.dump(), "application/json");
        if (!res) {
            if (res.error() == httplib::Error::ConnectionTimeout ||
                res.error() == httplib::Error::Read)
                last_error = "timeout talking to " + config_.endpoint;
            else
                last_error = "cannot reach " + config_.endpoint + " (" +
                             httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status == 429) {
            last_error = "rate limited by " + config_.endpoint;
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw TransportError("backend returned HTTP " + std::to_string(res->status));
        try {
            json reply = json::parse(res->body);
            std::string content =
                reply.at("choices").at(0).at("message").at("content").get<std::string>();
            return split_response(content);
        } catch (const json::exception& e) {
            throw TransportError(std::string("malformed backend reply: ") + e.what());
        }
    }
    if (last_error.rfind("timeout", 0) == 0) throw Timeout(last_error);
    if (last_error.rfind("rate limited", 0) == 0) throw RateLimited(last_error);
    throw TransportError(last_error);
}

// --- response parsers ----------------------------------------------------------

Action parse_action_response(const LmResponse& r) {
    std::vector<std::string> lines = split_lines(r.result_block);
    std::string first = lines.empty() ? "" : trim(lines[0]);
    return parse_action_text(first);
}

TargetSelection parse_target_response(const LmResponse& r, const ScreenSnapshot& snapshot,
                                      ActionKind action) {
    std::string block = trim(r.result_block);
    if (block.empty()) throw UnparseableResponse("empty target response");

    std::optional<int> id;
    std::string label;

    // "[<id>]" prefix when present.
    size_t pos = 0;
    if (block[0] == '[') {
        size_t close = block.find(']');
        if (close == std::string::npos)
            throw UnparseableResponse("unterminated [id] in target response: " + block);
        std::string digits = trim(block.substr(1, close - 1));
        try {
            id = std::stoi(digits);
        } catch (const std::exception&) {
            throw UnparseableResponse("non-numeric id in target response: " + block);
        }
        pos = close + 1;
    }

    // Quoted label when present.
    size_t quote = block.find_first_of("'\"", pos);
    if (quote != std::string::npos) {
        char q = block[quote];
        size_t close = block.find(q, quote + 1);
        if (close != std::string::npos) label = block.substr(quote + 1, close - quote - 1);
    } else if (!id) {
        // Bare text answers resolve as labels.
        label = trim(block);
    }

    const UiElement* element = nullptr;
    if (id) {
        element = find_element(snapshot, *id);
        if (!element)
            throw UnknownElement("element id " + std::to_string(*id) +
                                 " is not on the current screen");
    } else {
        if (label.empty()) throw UnparseableResponse("target response names no element: " + block);
        int matches = 0;
        for_each_element(snapshot.root, [&](const UiElement& e) {
            if (derive_label(e) == label) {
                if (!element) element = &e;
                ++matches;
            }
        });
        if (!element)
            throw UnknownElement("no element labeled '" + label + "' on the current screen");
        if (matches > 1)
            throw UnparseableResponse("label '" + label + "' is ambiguous on this screen");
    }

    CapabilityMask needed = required_capability(action);
    if (needed != 0 && (element->allowed_actions & needed) == 0)
        throw ActionNotAllowed("element " + std::to_string(element->id) + " ('" +
                               derive_label(*element) + "') does not allow " +
                               to_string(action));

    return TargetSelection{element->id, derive_label(*element), element->bounds,
                           r.chain_of_thought};
}

std::optional<int> parse_rank_response(const LmResponse& r) {
    std::string block = trim(r.result_block);
    std::vector<std::string> lines = split_lines(block);
    if (!lines.empty()) block = trim(lines[0]);
    if (block.empty()) throw UnparseableResponse("empty rank response");
    std::string upper;
    for (char c : block) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "NONE") return std::nullopt;
    // Accept "3" and "ID 3".
    if (upper.rfind("ID ", 0) == 0) block = trim(block.substr(3));
    try {
        size_t used = 0;
        int value = std::stoi(block, &used);
        if (used != block.size()) throw std::invalid_argument("trailing text");
        return value;
    } catch (const std::exception&) {
        throw UnparseableResponse("rank response is neither an id nor NONE: " + block);
    }
}

std::vector<UiAction> parse_substitution_response(const LmResponse& r,
                                                  const std::vector<UiAction>& original) {
    std::string block = trim(r.result_block);
    std::string upper;
    for (char c : block) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "UNCHANGED") return original;
    if (upper == "REFUSED")
        throw SubstitutionRefused("backend reports no coherent parameter mapping");

    std::vector<std::string> lines;
    for (const auto& line : split_lines(block)) {
        if (trim(line).empty()) continue;
        lines.push_back(trim(line));
    }
    if (lines.size() != original.size())
        throw UnparseableResponse("substitution rewrote " + std::to_string(lines.size()) +
                                  " actions, expected " + std::to_string(original.size()));

    std::vector<UiAction> out = original;
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string line = lines[i];
        // Tolerate a "1. " numbering prefix.
        size_t dot = line.find(". ");
        if (dot != std::string::npos && dot <= 3 &&
            line.find_first_not_of("0123456789") == dot)
            line = trim(line.substr(dot + 2));
        // Locator suffix "on [...]" is informative only.
        size_t on = line.find(" on [");
        if (on != std::string::npos) line = trim(line.substr(0, on));
        Action parsed = parse_action_text(line);
        if (parsed.kind != original[i].action.kind)
            throw UnparseableResponse("substitution changed action kind at step " +
                                      std::to_string(i + 1));
        out[i].action.payload = parsed.payload;
        if (parsed.direction != Direction::None) out[i].action.direction = parsed.direction;
    }
    return out;
}

}  // namespace uitasker
