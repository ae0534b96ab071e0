#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uitasker/types.hpp"
#include "uitasker/ui_model.hpp"

namespace uitasker {

enum class PromptKind { Action, Target, Description, Rank, Substitution };

std::string to_string(PromptKind k);
std::optional<PromptKind> prompt_kind_from_string(const std::string& name);

enum class SectionName { App, System, Ui, Task, Feedback, FailedAttempts };

std::string to_string(SectionName s);

/// One few-shot example: the sample input, the reasoning that leads to the
/// answer, and the expected answer.
struct Exemplar {
    std::string sample_prompt;
    std::string chain_of_thought;
    std::string sample_response;
};

struct Prompt {
    PromptKind kind = PromptKind::Action;
    std::string task_preamble;
    std::vector<std::pair<SectionName, std::string>> knowledge_sections;
    std::vector<Exemplar> exemplars;
    std::string query;

    /// Deterministic rendering: preamble, sections in fixed order, exemplars,
    /// query. Identical prompts render to identical bytes.
    std::string render() const;
};

/// Running-task state carried between steps.
struct TaskContext {
    std::string command;
    std::vector<std::pair<std::string, UiAction>> steps;  // (page label, action)
    std::vector<std::string> visited_pages;
    std::vector<std::pair<std::string, UiAction>> failed_attempts;  // (page label, action)
    std::vector<std::string> feedback_notes;
    int step_cap = 15;
};

struct AppInfo {
    std::string app_name;
    std::string package_name;
    std::vector<std::string> activity_names;
};

struct SysInfo {
    int width = 0;
    int height = 0;
    Orientation orientation = Orientation::Portrait;
    std::vector<std::string> installed_apps;
};

/// Exemplar pools and query text per prompt kind, plus the token budget.
/// Defaults are compiled in; template files can override them.
class PromptTemplates {
public:
    /// Built-in templates (the shipped template files carry the same text).
    static PromptTemplates builtin();

    /// Loads `<kind>.txt` files from a directory (docs/prompt-templates.md).
    /// Missing files keep the builtin entry. Throws SpecError on bad syntax.
    static PromptTemplates load(const std::string& dir);

    const std::string& preamble(PromptKind k) const;
    const std::string& query_template(PromptKind k) const;
    const std::vector<Exemplar>& exemplars(PromptKind k) const;

    int token_budget = 6000;

private:
    struct Entry {
        std::string preamble;
        std::string query;
        std::vector<Exemplar> exemplars;
    };
    std::map<PromptKind, Entry> entries_;
};

/// Instantiates the paper-style history template:
///   "Started from <page 1>, we <action 1> <target 1> to get to <page 2>."
/// joined with "After that, ..." clauses; empty history renders a fixed
/// "No previous steps." sentence.
std::string render_task_history(const TaskContext& ctx);

/// ceil(character count / 4); monotone in text length.
int estimate_tokens(const std::string& text);

/// Longest prefix of the pool whose summed estimated token cost fits the
/// remaining budget. Exemplars are never truncated mid-text.
std::vector<Exemplar> select_exemplars(const std::vector<Exemplar>& pool,
                                       int budget_remaining);

int exemplar_token_cost(const Exemplar& e);

/// First prompting stage: choose one action kind from the closed vocabulary.
/// Throws BudgetExceeded when the mandatory sections alone exceed the budget.
Prompt build_action_prompt(const TaskContext& ctx, const ScreenSnapshot& snapshot,
                           const AppInfo& app, const SysInfo& sys,
                           const PromptTemplates& templates);

/// Second stage: choose the target element. Candidates are restricted to
/// elements whose allowed actions permit `action`; throws NoCandidates when
/// no element supports it.
Prompt build_target_prompt(const TaskContext& ctx, const ScreenSnapshot& snapshot,
                           const Action& action, const PromptTemplates& templates);

/// Asks for a short functional summary plus interactive-element lists.
Prompt build_description_prompt(const ScreenSnapshot& snapshot,
                                const PromptTemplates& templates);

struct RankCandidate {
    int node_id = 0;
    std::string description;
    std::vector<std::string> served_commands;
};

/// Asks the backend for the most relevant screen id, or NONE.
Prompt build_rank_prompt(const std::string& command,
                         const std::vector<RankCandidate>& screens,
                         const PromptTemplates& templates);

/// Asks for the action sequence rewritten with substituted parameters, or
/// UNCHANGED / REFUSED.
Prompt build_substitution_prompt(const std::string& saved_command,
                                 const std::string& new_command,
                                 const std::vector<UiAction>& action_sequence,
                                 const PromptTemplates& templates);

}  // namespace uitasker
