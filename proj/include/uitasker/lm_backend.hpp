#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "uitasker/prompting.hpp"
#include "uitasker/types.hpp"
#include "uitasker/ui_model.hpp"

namespace uitasker {

/// Raw completion split into the fixed `THOUGHT: ... / RESULT: ...` grammar.
/// When no RESULT line is present the whole trimmed raw text is the result
/// block.
struct LmResponse {
    std::string raw;
    std::string chain_of_thought;
    std::string result_block;
};

LmResponse split_response(const std::string& raw);

struct TargetSelection {
    int element_id = 0;
    std::string label;
    Rect bounds;
    std::string rationale;
};

/// Completion backend seam: remote HTTP model or deterministic scripted mock.
class LmBackend {
public:
    virtual ~LmBackend() = default;
    virtual LmResponse complete(const Prompt& prompt) = 0;
};

/// One scripted entry: the prompt kind the orchestration is expected to issue
/// next, and the canned response text.
struct ScriptEntry {
    PromptKind expected_kind = PromptKind::Action;
    std::string response;
};

/// Deterministic mock: replays a scenario script in order. A prompt whose
/// kind differs from the next entry throws ScriptMismatch (surfacing
/// orchestration regressions); running out of entries throws ScriptExhausted.
class MockBackend : public LmBackend {
public:
    explicit MockBackend(std::vector<ScriptEntry> script);

    /// Scenario file format: JSON array of {"kind": ..., "response": ...}.
    static MockBackend from_file(const std::string& path);
    static std::vector<ScriptEntry> parse_script(const std::string& json_text);

    LmResponse complete(const Prompt& prompt) override;

    size_t calls_made() const;
    size_t entries_left() const;

private:
    std::vector<ScriptEntry> script_;
    size_t next_ = 0;
    mutable std::mutex mutex_;
};

struct HttpBackendConfig {
    std::string endpoint;   // e.g. https://api.openai.com
    std::string path = "/v1/chat/completions";
    std::string api_key;
    std::string model = "gpt-4";
    int timeout_seconds = 30;
    int max_retries = 2;
    int backoff_ms = 250;
};

/// Blocking HTTP backend speaking the chat-completions wire format. Retries
/// rate-limit and transport failures with capped backoff.
class HttpBackend : public LmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    /// Reads UITASKER_LM_ENDPOINT / UITASKER_LM_API_KEY / UITASKER_LM_MODEL.
    static HttpBackend from_environment();

    LmResponse complete(const Prompt& prompt) override;

private:
    HttpBackendConfig config_;
};

/// Case-insensitive match on the closed action vocabulary over the result
/// block. Throws UnparseableResponse when nothing matches.
Action parse_action_response(const LmResponse& r);

/// Resolves the element named by the response against the snapshot the prompt
/// was built from, tolerating label-only answers. Throws UnknownElement when
/// nothing resolves and ActionNotAllowed when the element forbids the action.
TargetSelection parse_target_response(const LmResponse& r, const ScreenSnapshot& snapshot,
                                      ActionKind action);

/// Rank responses: a node id, or nullopt for NONE.
std::optional<int> parse_rank_response(const LmResponse& r);

/// Substitution responses: UNCHANGED keeps the sequence, REFUSED throws
/// SubstitutionRefused, otherwise one rewritten action per line whose kinds
/// must match the original sequence.
std::vector<UiAction> parse_substitution_response(const LmResponse& r,
                                                  const std::vector<UiAction>& original);

}  // namespace uitasker
