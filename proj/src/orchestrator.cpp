#include "uitasker/orchestrator.hpp"

#include <algorithm>

#include "uitasker/errors.hpp"

namespace uitasker {

namespace {

std::string page_label(const ScreenSnapshot& s) {
    if (!s.activity_name.empty()) return s.activity_name;
    if (!s.app_name.empty()) return s.app_name + " screen";
    return "screen";
}

AppInfo app_info_for(const ScreenSnapshot& s) {
    AppInfo info;
    info.app_name = s.app_name;
    info.package_name = s.package_name;
    if (!s.activity_name.empty()) info.activity_names = {s.activity_name};
    return info;
}

SysInfo sys_info_for(const ScreenSnapshot& s, DeviceInterface& device) {
    SysInfo info;
    info.width = s.width;
    info.height = s.height;
    info.orientation = s.orientation;
    info.installed_apps = device.installed_apps();
    return info;
}

std::vector<UiAction> actions_of(const std::vector<TransitionEdge>& path) {
    std::vector<UiAction> out;
    out.reserve(path.size());
    for (const auto& e : path) {
        UiAction a;
        a.action = e.action;
        if (!e.target_locator.resource_name.empty() || !e.target_locator.label.empty() ||
            e.target_locator.bounds)
            a.target = e.target_locator;
        out.push_back(std::move(a));
    }
    return out;
}

// Runtime state and control flow for a single command.
class TaskRun {
public:
    TaskRun(const std::string& command, DeviceInterface& device, GraphStore& store,
            LmBackend& lm, const OrchestratorConfig& config)
        : command_(command), device_(device), store_(store), lm_(lm), config_(config) {
        ctx_.command = command;
        ctx_.step_cap = config.step_cap;
    }

    TaskResult run() {
        emit(trace::kTaskStarted, command_);
        try {
            ScreenSnapshot current = stabilized();
            if (!replay_phase(current)) explore_phase();
        } catch (const ScriptMismatch&) {
            throw;  // scenario harness bug; never mask it as a task outcome
        } catch (const Error& e) {
            result_.status = TaskStatus::Unrecoverable;
            result_.reason = e.what();
            emit(trace::kTaskFinished, "unrecoverable: " + result_.reason);
        }
        result_.steps_taken = steps_taken_;
        result_.path_source = replay_steps_ > 0
                                  ? (explore_steps_ > 0 ? PathSource::Hybrid
                                                        : PathSource::Replayed)
                                  : PathSource::Explored;
        return std::move(result_);
    }

private:
    ScreenSnapshot stabilized() {
        StableSnapshot s = await_stable(device_, config_.executor);
        return filter_noise(s.snapshot);
    }

    void emit(const std::string& kind, const std::string& detail) {
        TraceEvent e{steps_taken_, kind, detail};
        result_.events.push_back(e);
        if (config_.on_event) config_.on_event(e);
    }

    AppGraph& graph_for(const ScreenSnapshot& s) { return store_.graph_for(s.package_name); }

    void describe_new_node(AppGraph& graph, int node_id, const ScreenSnapshot& filtered) {
        if (!config_.lm_descriptions) return;
        ScreenNode* node = graph.find_node(node_id);
        if (!node || !node->description.summary.empty()) return;
        Prompt p = build_description_prompt(filtered, config_.templates);
        emit(trace::kPromptIssued, to_string(p.kind));
        LmResponse r = lm_.complete(p);
        node->description.summary = r.result_block;
    }

    void record_step(const ScreenSnapshot& before, const UiAction& action,
                     const ScreenSnapshot& after) {
        if (before.package_name != after.package_name) return;  // no cross-app edges
        AppGraph& graph = graph_for(before);
        bool to_was_known = match_node(graph, after).has_value();
        record_transition(graph, before, action, after);
        if (!to_was_known && config_.lm_descriptions) {
            if (auto id = match_node(graph, after)) describe_new_node(graph, *id, after);
        }
        emit(trace::kRecorded, format_ui_action(action));
    }

    void finish_completed(const ScreenSnapshot& final_screen) {
        AppGraph& graph = graph_for(final_screen);
        int node = ensure_node(graph, final_screen);
        append_served_command(graph, node, command_);
        result_.status = TaskStatus::Completed;
        result_.final_node = node;
        emit(trace::kTaskFinished, "completed at node " + std::to_string(node));
    }

    void finish_cap(const ScreenSnapshot& current) {
        result_.status = TaskStatus::StepCapExceeded;
        AppGraph& graph = graph_for(current);
        result_.final_node = match_node(graph, current);
        emit(trace::kTaskFinished, "step cap exceeded");
    }

    void finish_unrecoverable(const std::string& reason, const ScreenSnapshot& current) {
        result_.status = TaskStatus::Unrecoverable;
        result_.reason = reason;
        AppGraph& graph = graph_for(current);
        result_.final_node = match_node(graph, current);
        emit(trace::kTaskFinished, "unrecoverable: " + reason);
    }

    bool at_step_cap() const { return steps_taken_ >= config_.step_cap; }

    void note_step(const ScreenSnapshot& before, const UiAction& action,
                   const ScreenSnapshot& after) {
        ctx_.steps.emplace_back(page_label(before), action);
        if (ctx_.visited_pages.empty()) ctx_.visited_pages.push_back(page_label(before));
        ctx_.visited_pages.push_back(page_label(after));
    }

    void load_feedback(const ScreenSnapshot& current) {
        ctx_.feedback_notes.clear();
        AppGraph& graph = graph_for(current);
        if (auto node_id = match_node(graph, current)) {
            if (const ScreenNode* node = graph.find_node(*node_id))
                ctx_.feedback_notes = node->feedback_notes;
        }
    }

    // --- replay ---------------------------------------------------------------

    // Returns true when the task finished during the replay phase (including
    // degenerate successes and hard failures); false falls through to
    // exploration.
    bool replay_phase(ScreenSnapshot current) {
        AppGraph& graph = graph_for(current);
        std::optional<int> cur = locate_current(graph, current, lm_, config_.templates);
        emit(trace::kLocated, cur ? "node " + std::to_string(*cur) : "unknown screen");
        if (!cur) return false;

        dest_ = find_destination(graph, command_, lm_, config_.templates);
        emit(trace::kDestination,
             dest_ ? "node " + std::to_string(*dest_) : "no destination");
        if (!dest_) return false;

        if (*cur == *dest_) {
            // Zero-length path: the request is already served by this screen.
            emit(trace::kReplayStarted, "already at destination");
            replay_steps_ = 0;
            finish_completed(current);
            result_.path_source = PathSource::Replayed;
            return true;
        }

        std::vector<TransitionEdge> path;
        try {
            path = shortest_path(graph, *cur, *dest_, excluded_edges_);
        } catch (const NoPath&) {
            return false;
        }

        const ScreenNode* dest_node = graph.find_node(*dest_);
        saved_command_ = dest_node && !dest_node->served_commands.empty()
                             ? dest_node->served_commands.back()
                             : command_;

        std::vector<UiAction> adapted;
        try {
            adapted = parameterize(actions_of(path), saved_command_, command_, lm_,
                                   config_.templates);
            if (saved_command_ != command_) emit(trace::kParameterized, "sequence adapted");
        } catch (const SubstitutionRefused& e) {
            emit(trace::kRecovery, std::string("substitution refused: ") + e.what());
            return false;
        }
        emit(trace::kReplayStarted, std::to_string(path.size()) + " saved steps");
        return replay_loop(std::move(path), std::move(adapted));
    }

    bool replay_loop(std::vector<TransitionEdge> path, std::vector<UiAction> adapted) {
        size_t i = 0;
        while (i < path.size()) {
            ScreenSnapshot current = stabilized();
            if (at_step_cap()) {
                finish_cap(current);
                return true;
            }
            const TransitionEdge& edge = path[i];
            const UiAction& planned = adapted[i];

            std::optional<int> target_id;
            if (action_needs_target(planned.action.kind)) {
                target_id = resolve_locator(edge.target_locator, current);
                if (!target_id) {
                    emit(trace::kDiverged,
                         "target [" + to_string(edge.target_locator) + "] not on screen");
                    replay_failed_screens_.insert(fingerprint(current).bits);
                    int rec = recover(edge, current);
                    if (rec == kRecoveredFinished) return true;
                    if (rec == kRecoveredExplore) return false;
                    path = pending_path_;
                    adapted = pending_adapted_;
                    i = 0;
                    continue;
                }
            }

            StepOutcome outcome =
                execute_step(device_, planned.action, target_id, config_.executor);
            if (outcome.performed) ++steps_taken_;
            emit(trace::kActionExecuted,
                 format_action(planned.action) + " -> " +
                     (outcome.status == StepStatus::Succeeded ? "succeeded"
                      : outcome.status == StepStatus::NoEffect ? "no effect"
                                                               : outcome.failure_reason));

            if (outcome.status == StepStatus::Succeeded) {
                ++replay_steps_;
                AppGraph& graph = graph_for(outcome.after);
                ReplayValidation v = validate_replay_step(edge.to, outcome.after, graph,
                                                          lm_, config_.templates);
                if (v == ReplayValidation::Matched) {
                    emit(trace::kValidation, "matched node " + std::to_string(edge.to));
                    UiAction recorded{planned.action, edge.target_locator};
                    record_step(outcome.before, recorded, outcome.after);
                    note_step(outcome.before, recorded, outcome.after);
                    ++i;
                    continue;
                }
                emit(trace::kDiverged,
                     "landed on an unexpected screen instead of node " +
                         std::to_string(edge.to));
                replay_failed_screens_.insert(fingerprint(outcome.after).bits);
            } else {
                emit(trace::kDiverged, "saved step had no effect");
                replay_failed_screens_.insert(fingerprint(outcome.before).bits);
            }

            int rec = recover(edge, outcome.after);
            if (rec == kRecoveredFinished) return true;
            if (rec == kRecoveredExplore) return false;
            path = pending_path_;
            adapted = pending_adapted_;
            i = 0;
        }

        ScreenSnapshot final_screen = stabilized();
        finish_completed(final_screen);
        return true;
    }

    static constexpr int kRecoveredReplay = 0;
    static constexpr int kRecoveredExplore = 1;
    static constexpr int kRecoveredFinished = 2;

    // Revert once with BACK, re-locate, and replan around the failed edge.
    int recover(const TransitionEdge& failed_edge, const ScreenSnapshot& at) {
        excluded_edges_.push_back(failed_edge);
        if (at_step_cap()) {
            finish_cap(at);
            return kRecoveredFinished;
        }

        StepOutcome back = execute_step(device_, back_action(), std::nullopt,
                                        config_.executor);
        if (back.performed) ++steps_taken_;
        emit(trace::kRecovery, std::string("revert BACK -> ") +
                                   (back.status == StepStatus::Succeeded ? "screen changed"
                                                                         : "no effect"));
        if (back.status == StepStatus::Succeeded) {
            UiAction back_ui{back_action(), std::nullopt};
            record_step(back.before, back_ui, back.after);
            note_step(back.before, back_ui, back.after);
        }

        ScreenSnapshot current = stabilized();
        AppGraph& graph = graph_for(current);
        std::optional<int> cur = locate_current(graph, current, lm_, config_.templates);
        emit(trace::kLocated, cur ? "node " + std::to_string(*cur) : "unknown screen");
        if (!cur || !dest_) return kRecoveredExplore;
        if (*cur == *dest_) {
            finish_completed(current);
            return kRecoveredFinished;
        }
        try {
            pending_path_ = shortest_path(graph, *cur, *dest_, excluded_edges_);
        } catch (const Error&) {
            return kRecoveredExplore;
        }
        try {
            pending_adapted_ = parameterize(actions_of(pending_path_), saved_command_,
                                            command_, lm_, config_.templates);
        } catch (const SubstitutionRefused&) {
            return kRecoveredExplore;
        }
        emit(trace::kRecovery,
             "replay resumed with " + std::to_string(pending_path_.size()) + " steps");
        return kRecoveredReplay;
    }

    // --- exploration ------------------------------------------------------------

    void explore_phase() {
        emit(trace::kExplorationStarted, "");
        while (true) {
            ScreenSnapshot current = stabilized();
            if (at_step_cap()) {
                finish_cap(current);
                return;
            }
            ScreenFingerprint screen_fp = fingerprint(current);
            int failures = state_.failures_per_screen[screen_fp.bits];
            if (failures >= config_.retry_budget) {
                if (replay_failed_screens_.count(screen_fp.bits)) {
                    finish_unrecoverable("replay and exploration both failed on this screen",
                                         current);
                } else {
                    finish_cap(current);
                }
                return;
            }

            load_feedback(current);
            AppInfo app = app_info_for(current);
            SysInfo sys = sys_info_for(current, device_);

            ExplorationStep step;
            try {
                step = exploration_step(ctx_, device_, current, app, sys, lm_, state_,
                                        config_);
            } catch (const NoCandidates& e) {
                ++state_.failures_per_screen[screen_fp.bits];
                emit(trace::kStepFailed, e.what());
                continue;
            }
            for (const auto& kind : step.prompts_issued) emit(trace::kPromptIssued, kind);

            if (step.done_signal) {
                ++explore_steps_;  // counts the decision, not a device action
                finish_completed(current);
                return;
            }
            if (step.proposal_excluded) {
                ++state_.failures_per_screen[screen_fp.bits];
                emit(trace::kExcludedProposal, format_ui_action(step.ui_action));
                continue;
            }
            if (step.parse_failed) {
                ++state_.failures_per_screen[screen_fp.bits];
                emit(trace::kStepFailed, "unusable backend response");
                continue;
            }

            if (step.outcome.performed) ++steps_taken_;
            emit(trace::kActionExecuted,
                 format_ui_action(step.ui_action) + " -> " +
                     (step.outcome.status == StepStatus::Succeeded ? "succeeded"
                      : step.outcome.status == StepStatus::NoEffect
                          ? "no effect"
                          : step.outcome.failure_reason));

            if (step.outcome.status == StepStatus::Succeeded) {
                ++explore_steps_;
                record_step(step.outcome.before, step.ui_action, step.outcome.after);
                note_step(step.outcome.before, step.ui_action, step.outcome.after);
            } else {
                std::string key = ExplorationState::triple_key(
                    screen_fp, step.ui_action.action.kind, step.ui_action.action.direction,
                    step.ui_action.target);
                state_.excluded_triples.insert(key);
                ctx_.failed_attempts.emplace_back(page_label(current), step.ui_action);
                ++state_.failures_per_screen[screen_fp.bits];
                emit(trace::kStepFailed, format_ui_action(step.ui_action));
            }
        }
    }

    const std::string command_;
    DeviceInterface& device_;
    GraphStore& store_;
    LmBackend& lm_;
    const OrchestratorConfig& config_;

    TaskContext ctx_;
    TaskResult result_;
    ExplorationState state_;
    std::vector<TransitionEdge> excluded_edges_;
    std::set<std::uint64_t> replay_failed_screens_;
    std::vector<TransitionEdge> pending_path_;
    std::vector<UiAction> pending_adapted_;
    std::optional<int> dest_;
    std::string saved_command_;
    int steps_taken_ = 0;
    int replay_steps_ = 0;
    int explore_steps_ = 0;
};

}  // namespace

std::string to_string(TaskStatus s) {
    switch (s) {
        case TaskStatus::Completed: return "completed";
        case TaskStatus::StepCapExceeded: return "step_cap_exceeded";
        case TaskStatus::Unrecoverable: return "unrecoverable";
    }
    return "unrecoverable";
}

std::string to_string(PathSource s) {
    switch (s) {
        case PathSource::Replayed: return "replayed";
        case PathSource::Explored: return "explored";
        case PathSource::Hybrid: return "hybrid";
    }
    return "explored";
}

bool TaskResult::has_event(const std::string& kind) const {
    return std::any_of(events.begin(), events.end(),
                       [&](const TraceEvent& e) { return e.kind == kind; });
}

std::string ExplorationState::triple_key(const ScreenFingerprint& screen, ActionKind kind,
                                         Direction direction,
                                         const std::optional<TargetLocator>& locator) {
    std::string key = std::to_string(screen.bits) + "/" +
                      std::to_string(screen.element_count) + "|" + to_string(kind);
    if (direction != Direction::None) key += " " + to_string(direction);
    key += "|";
    if (locator) key += to_string(*locator);
    return key;
}

ReplayValidation validate_replay_step(int expected_node, const ScreenSnapshot& after_filtered,
                                      const AppGraph& graph, LmBackend& lm,
                                      const PromptTemplates& templates) {
    const ScreenNode* node = graph.find_node(expected_node);
    if (!node) return ReplayValidation::Diverged;
    if (node->layout_signature == layout_signature(after_filtered))
        return ReplayValidation::Matched;

    // Semantic fallback: ask the ranker whether the landed screen still
    // matches the expected node's description.
    RankCandidate candidate;
    candidate.node_id = node->node_id;
    candidate.description = node->description.render();
    candidate.served_commands = node->served_commands;
    std::string query =
        "the screen described as: " + heuristic_description(after_filtered).render();
    Prompt prompt = build_rank_prompt(query, {candidate}, templates);
    std::optional<int> picked = parse_rank_response(lm.complete(prompt));
    return picked && *picked == expected_node ? ReplayValidation::Matched
                                              : ReplayValidation::Diverged;
}

ExplorationStep exploration_step(TaskContext& ctx, DeviceInterface& device,
                                 const ScreenSnapshot& filtered_current,
                                 const AppInfo& app, const SysInfo& sys, LmBackend& lm,
                                 ExplorationState& state, const OrchestratorConfig& config) {
    ExplorationStep step;
    auto [anonymized, redactions] = anonymize(filtered_current);
    (void)redactions;

    Prompt action_prompt =
        build_action_prompt(ctx, anonymized, app, sys, config.templates);
    step.prompts_issued.push_back(to_string(action_prompt.kind));
    Action action;
    try {
        action = parse_action_response(lm.complete(action_prompt));
    } catch (const UnparseableResponse&) {
        // One retry with a format reminder appended to the query.
        Prompt retry = action_prompt;
        retry.query += "\nReminder: answer with RESULT: followed by exactly one action "
                       "from the allowed list.";
        step.prompts_issued.push_back(to_string(retry.kind));
        try {
            action = parse_action_response(lm.complete(retry));
        } catch (const UnparseableResponse&) {
            step.parse_failed = true;
            return step;
        }
    }
    step.ui_action.action = action;

    if (action.kind == ActionKind::Done) {
        step.done_signal = true;
        return step;
    }

    if (action_needs_target(action.kind)) {
        Prompt target_prompt =
            build_target_prompt(ctx, anonymized, action, config.templates);
        step.prompts_issued.push_back(to_string(target_prompt.kind));
        TargetSelection selection;
        try {
            selection = parse_target_response(lm.complete(target_prompt),
                                              anonymized, action.kind);
        } catch (const Error& e) {
            if (dynamic_cast<const ScriptExhausted*>(&e) ||
                dynamic_cast<const ScriptMismatch*>(&e))
                throw;
            step.parse_failed = true;
            return step;
        }
        step.target_id = selection.element_id;
        const UiElement* element = find_element(filtered_current, selection.element_id);
        if (element)
            step.ui_action.target =
                make_locator(*element, filtered_current.width, filtered_current.height);
    }

    std::string key = ExplorationState::triple_key(
        fingerprint(filtered_current), action.kind, action.direction, step.ui_action.target);
    if (state.excluded_triples.count(key)) {
        step.proposal_excluded = true;
        return step;
    }

    step.outcome = execute_step(device, action, step.target_id, config.executor);
    return step;
}

TaskResult handle_command(const std::string& command, DeviceInterface& device,
                          GraphStore& store, LmBackend& lm,
                          const OrchestratorConfig& config) {
    TaskRun run(command, device, store, lm, config);
    return run.run();
}

}  // namespace uitasker
