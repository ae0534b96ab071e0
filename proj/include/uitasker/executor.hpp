#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uitasker/types.hpp"
#include "uitasker/ui_model.hpp"

namespace uitasker {

/// Capability seam between the engine and a device. The scripted simulator
/// and any future real-device adapter are interchangeable behind it. A
/// device session is single threaded: callers keep a strict
/// perform -> stabilize -> validate ordering.
class DeviceInterface {
public:
    virtual ~DeviceInterface() = default;

    /// Current screen; reflects all state changes of the last perform() once
    /// the screen is stable.
    virtual ScreenSnapshot snapshot() = 0;

    /// Applies one action; `target` is the element id on the current screen
    /// for actions that need one. Returns false when the action could not be
    /// delivered (for example the target id no longer exists).
    virtual bool perform(const Action& action, std::optional<int> target) = 0;

    virtual std::vector<std::string> installed_apps() = 0;
};

struct ExecutorConfig {
    int poll_interval_ms = 100;
    int stabilize_deadline_ms = 10000;
    int change_threshold_bits = 1;
    /// Wait between polls; replace with a no-op for simulated devices.
    std::function<void(std::chrono::milliseconds)> sleeper;
};

ExecutorConfig simulated_executor_config();

struct StableSnapshot {
    ScreenSnapshot snapshot;
    /// Set when the stabilization deadline passed with a loading widget (or a
    /// still-changing screen); the snapshot is best effort.
    bool possibly_loading = false;
};

/// Polls the device until no element is a progress indicator and two
/// consecutive fingerprints agree, or until the deadline degrades to best
/// effort.
StableSnapshot await_stable(DeviceInterface& device, const ExecutorConfig& config = {});

enum class StepStatus { Succeeded, NoEffect, Failed };

struct StepOutcome {
    StepStatus status = StepStatus::NoEffect;
    std::string failure_reason;
    ScreenFingerprint before_fp;
    ScreenFingerprint after_fp;
    ScreenSnapshot before;  // noise-filtered
    ScreenSnapshot after;   // noise-filtered
    bool possibly_loading = false;
    /// False when the action never reached the device (DONE, or the target
    /// vanished before perform).
    bool performed = false;
};

/// Performs one action and validates its effect: entered text must appear in
/// the target field; navigation actions must change the screen fingerprint;
/// DONE is a device no-op that always succeeds.
StepOutcome execute_step(DeviceInterface& device, const Action& action,
                         std::optional<int> target, const ExecutorConfig& config = {});

/// True when the element (or its resource name) marks an in-progress load.
bool is_loading_widget(const UiElement& e);
bool has_loading_widget(const ScreenSnapshot& s);

/// Locator for re-finding an element on later screens.
TargetLocator make_locator(const UiElement& e, int width, int height);
/// Resolution priority: resource name, then derived label, then grid bounds.
std::optional<int> resolve_locator(const TargetLocator& loc, const ScreenSnapshot& s);

}  // namespace uitasker
