#include "uitasker/executor.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include "uitasker/errors.hpp"

namespace uitasker {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

// Re-finds the acted-on element in the after-snapshot; ids are snapshot-local
// so matching walks stable attributes instead.
const UiElement* find_counterpart(const ScreenSnapshot& after, const UiElement& before) {
    const UiElement* found = nullptr;
    if (!before.resource_name.empty()) {
        for_each_element(after.root, [&](const UiElement& e) {
            if (!found && e.resource_name == before.resource_name) found = &e;
        });
        if (found) return found;
    }
    for_each_element(after.root, [&](const UiElement& e) {
        if (!found && e.widget_class == before.widget_class && e.bounds == before.bounds)
            found = &e;
    });
    if (found) return found;
    std::string label = derive_label(before);
    for_each_element(after.root, [&](const UiElement& e) {
        if (!found && e.widget_class == before.widget_class && derive_label(e) == label)
            found = &e;
    });
    return found;
}

}  // namespace

ExecutorConfig simulated_executor_config() {
    ExecutorConfig cfg;
    cfg.sleeper = [](std::chrono::milliseconds) {};
    return cfg;
}

bool is_loading_widget(const UiElement& e) {
    if (e.widget_class == WidgetClass::ProgressIndicator) return true;
    std::string res = lower(e.resource_name);
    return res.find("progress") != std::string::npos ||
           res.find("loading") != std::string::npos ||
           res.find("spinner") != std::string::npos;
}

bool has_loading_widget(const ScreenSnapshot& s) {
    bool found = false;
    for_each_element(s.root, [&](const UiElement& e) {
        if (is_loading_widget(e)) found = true;
    });
    return found;
}

StableSnapshot await_stable(DeviceInterface& device, const ExecutorConfig& config) {
    auto sleeper = config.sleeper ? config.sleeper : default_sleep;
    int max_polls = std::max(2, config.stabilize_deadline_ms /
                                    std::max(1, config.poll_interval_ms));

    std::optional<ScreenFingerprint> prev;
    ScreenSnapshot last;
    for (int poll = 0; poll < max_polls; ++poll) {
        last = device.snapshot();
        ScreenSnapshot filtered = filter_noise(last);
        bool loading = has_loading_widget(filtered);
        ScreenFingerprint fp = fingerprint(filtered);
        if (!loading && prev && *prev == fp) return {last, false};
        prev = loading ? std::nullopt : std::optional<ScreenFingerprint>(fp);
        if (poll + 1 < max_polls)
            sleeper(std::chrono::milliseconds(config.poll_interval_ms));
    }
    return {last, true};
}

StepOutcome execute_step(DeviceInterface& device, const Action& action,
                         std::optional<int> target, const ExecutorConfig& config) {
    StepOutcome out;
    ScreenSnapshot before_raw = device.snapshot();
    out.before = filter_noise(before_raw);
    out.before_fp = fingerprint(out.before);

    if (action.kind == ActionKind::Done) {
        // Task-complete marker; nothing reaches the device.
        out.after = out.before;
        out.after_fp = out.before_fp;
        out.status = StepStatus::Succeeded;
        return out;
    }

    const UiElement* target_element =
        target ? find_element(out.before, *target) : nullptr;
    if (action_needs_target(action.kind) && target && !target_element) {
        out.after = out.before;
        out.after_fp = out.before_fp;
        out.status = StepStatus::Failed;
        out.failure_reason = "target vanished before perform";
        return out;
    }

    bool ack = device.perform(action, target);
    out.performed = true;
    StableSnapshot stable = await_stable(device, config);
    out.possibly_loading = stable.possibly_loading;
    out.after = filter_noise(stable.snapshot);
    out.after_fp = fingerprint(out.after);

    if (!ack && action_needs_target(action.kind)) {
        out.status = StepStatus::Failed;
        out.failure_reason = "target vanished";
        return out;
    }

    // A non-DONE action on a byte-identical screen never succeeded.
    bool unchanged = content_equals(out.before, out.after);

    if (action.kind == ActionKind::EnterText) {
        const UiElement* field =
            target_element ? find_counterpart(out.after, *target_element) : nullptr;
        bool present = field && field->text.find(action.payload) != std::string::npos;
        out.status = (present && !unchanged) ? StepStatus::Succeeded : StepStatus::NoEffect;
        if (out.status == StepStatus::NoEffect)
            out.failure_reason = present ? "screen unchanged" : "entered text not visible";
        return out;
    }

    int distance = hamming(out.before_fp, out.after_fp);
    if (!unchanged && distance >= config.change_threshold_bits) {
        out.status = StepStatus::Succeeded;
    } else {
        out.status = StepStatus::NoEffect;
        out.failure_reason = "screen content did not change";
    }
    return out;
}

TargetLocator make_locator(const UiElement& e, int width, int height) {
    TargetLocator loc;
    loc.resource_name = e.resource_name;
    loc.label = derive_label(e);
    loc.bounds = quantize_bounds(e.bounds, width, height);
    return loc;
}

std::optional<int> resolve_locator(const TargetLocator& loc, const ScreenSnapshot& s) {
    std::optional<int> found;
    if (!loc.resource_name.empty()) {
        for_each_element(s.root, [&](const UiElement& e) {
            if (!found && e.resource_name == loc.resource_name) found = e.id;
        });
        if (found) return found;
    }
    if (!loc.label.empty()) {
        for_each_element(s.root, [&](const UiElement& e) {
            if (!found && derive_label(e) == loc.label) found = e.id;
        });
        if (found) return found;
    }
    if (loc.bounds) {
        for_each_element(s.root, [&](const UiElement& e) {
            if (!found && quantize_bounds(e.bounds, s.width, s.height) == *loc.bounds)
                found = e.id;
        });
    }
    return found;
}

}  // namespace uitasker
