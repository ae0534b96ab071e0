#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uitasker/executor.hpp"
#include "uitasker/graph_store.hpp"
#include "uitasker/lm_backend.hpp"
#include "uitasker/prompting.hpp"

namespace uitasker {

enum class TaskStatus { Completed, StepCapExceeded, Unrecoverable };
enum class PathSource { Replayed, Explored, Hybrid };

std::string to_string(TaskStatus s);
std::string to_string(PathSource s);

/// One entry of the structured step-trace stream consumed by the CLI for
/// live display and by the evaluation harness for metrics.
struct TraceEvent {
    int step = 0;  // steps_taken when the event fired
    std::string kind;
    std::string detail;
};

namespace trace {
inline constexpr const char* kTaskStarted = "task_started";
inline constexpr const char* kLocated = "located";
inline constexpr const char* kDestination = "destination";
inline constexpr const char* kReplayStarted = "replay_started";
inline constexpr const char* kParameterized = "parameterized";
inline constexpr const char* kPromptIssued = "prompt_issued";
inline constexpr const char* kActionExecuted = "action_executed";
inline constexpr const char* kValidation = "validation";
inline constexpr const char* kDiverged = "diverged";
inline constexpr const char* kRecovery = "recovery";
inline constexpr const char* kRecorded = "recorded";
inline constexpr const char* kExcludedProposal = "excluded_proposal";
inline constexpr const char* kStepFailed = "step_failed";
inline constexpr const char* kExplorationStarted = "exploration_started";
inline constexpr const char* kTaskFinished = "task_finished";
}  // namespace trace

struct TaskResult {
    TaskStatus status = TaskStatus::Unrecoverable;
    std::string reason;  // set for Unrecoverable
    int steps_taken = 0;
    PathSource path_source = PathSource::Explored;
    std::optional<int> final_node;
    std::vector<TraceEvent> events;

    bool has_event(const std::string& kind) const;
};

struct OrchestratorConfig {
    int step_cap = 15;
    int retry_budget = 3;  // max failed attempts tolerated per screen
    PromptTemplates templates = PromptTemplates::builtin();
    ExecutorConfig executor = simulated_executor_config();
    /// Ask the backend to summarize newly recorded screens (adds one
    /// description prompt per new node); off keeps scripted runs minimal.
    bool lm_descriptions = false;
    std::function<void(const TraceEvent&)> on_event;
};

/// Runs one command end to end: replay via the stored graph when the task is
/// precedented, otherwise (or on divergence) step-by-step exploration with
/// per-step validation. Every successful step is recorded into the graph.
TaskResult handle_command(const std::string& command, DeviceInterface& device,
                          GraphStore& store, LmBackend& lm,
                          const OrchestratorConfig& config);

enum class ReplayValidation { Matched, Diverged };

/// Layout-signature equality first; backend-ranked description match as the
/// fallback. Diverged triggers the revert-and-replan path in handle_command.
ReplayValidation validate_replay_step(int expected_node, const ScreenSnapshot& after_filtered,
                                      const AppGraph& graph, LmBackend& lm,
                                      const PromptTemplates& templates);

/// Exploration bookkeeping shared across the steps of one task: the no-repeat
/// exclusion set and per-screen failure counts.
struct ExplorationState {
    std::set<std::string> excluded_triples;
    std::map<std::uint64_t, int> failures_per_screen;

    static std::string triple_key(const ScreenFingerprint& screen, ActionKind kind,
                                  Direction direction,
                                  const std::optional<TargetLocator>& locator);
};

struct ExplorationStep {
    bool done_signal = false;        // backend answered DONE
    bool proposal_excluded = false;  // proposal matched a known failure; not executed
    bool parse_failed = false;       // response unusable after one retry
    UiAction ui_action;
    std::optional<int> target_id;
    StepOutcome outcome;
    std::vector<std::string> prompts_issued;  // prompt kinds, in order
};

/// One two-stage exploration step: action prompt, target prompt when needed,
/// execution and validation. Does not touch the device when the proposal is
/// excluded or unusable.
ExplorationStep exploration_step(TaskContext& ctx, DeviceInterface& device,
                                 const ScreenSnapshot& filtered_current,
                                 const AppInfo& app, const SysInfo& sys, LmBackend& lm,
                                 ExplorationState& state, const OrchestratorConfig& config);

}  // namespace uitasker
