#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uitasker/executor.hpp"
#include "uitasker/types.hpp"
#include "uitasker/ui_model.hpp"

namespace uitasker {

/// Declarative element template. `text` may contain `{param}` placeholders
/// filled from captured parameters at render time.
struct ElementTemplate {
    WidgetClass widget_class = WidgetClass::Other;
    std::string text;
    std::string content_desc;
    std::string resource_name;
    Rect bounds;
    CapabilityMask allowed_actions = 0;
    std::vector<ElementTemplate> children;
};

struct ScreenTemplate {
    std::string name;
    std::string activity;
    std::vector<ElementTemplate> elements;
};

/// (screen, action, target) -> next screen, optionally capturing the typed
/// text into a named parameter.
struct TransitionRule {
    std::string from;
    ActionKind action = ActionKind::Press;
    Direction direction = Direction::None;
    std::string target;  // resource name or derived label; empty for SWIPE/targetless
    std::string to;
    std::string capture;  // parameter name for ENTER_TEXT payloads
};

struct PopupSpec {
    std::string message = "Special offer!";
    bool sticky = false;  // sticky popups ignore BACK; only the close button works
};

/// Fires once when the device-wide perform counter reaches `trigger_step`.
struct Perturbation {
    int trigger_step = 0;
    std::optional<PopupSpec> popup;
    int loading_ticks = 0;
    std::optional<std::uint32_t> shuffle_seed;
};

struct AppSpec {
    std::string app_name;
    std::string package_name;
    std::string initial_screen;
    int width = 1080;
    int height = 1920;
    std::map<std::string, ScreenTemplate> screens;
    std::vector<TransitionRule> transitions;
    std::vector<Perturbation> perturbations;
};

/// Parses and validates an app spec file (docs/app-specs.md). Throws
/// SpecError with line diagnostics for syntax errors and named references
/// for semantic ones (undeclared screens, unknown targets).
AppSpec load_app_spec(const std::string& path);
AppSpec parse_app_spec(const std::string& json_text, const std::string& origin = "app spec");

/// Deterministic state-machine device. Identical action sequences from reset
/// yield identical snapshot sequences. Undefined (screen, action, target)
/// combinations are no-ops, modeling inert UI.
class SimDevice : public DeviceInterface {
public:
    SimDevice() = default;

    void load_app(const AppSpec& spec);
    void load_app_file(const std::string& path);

    /// Back to every app's initial screen; perform and tick counters zeroed;
    /// runtime perturbations dropped and spec perturbations re-armed.
    void reset();

    /// Arms an extra perturbation for the active app (evaluation harness use).
    void add_perturbation(const Perturbation& p);

    ScreenSnapshot snapshot() override;
    bool perform(const Action& action, std::optional<int> target) override;
    std::vector<std::string> installed_apps() override;

    const std::string& active_package() const { return active_package_; }
    std::string current_screen_name() const;
    bool popup_active() const { return static_cast<bool>(popup_); }
    int perform_count() const { return perform_count_; }

    /// Renders a screen template outside the live session (ground-truth
    /// screens for evaluation). Parameters render as empty strings.
    ScreenSnapshot render_screen(const std::string& package_name,
                                 const std::string& screen_name) const;

private:
    struct AppState {
        AppSpec spec;
        std::string current;
        std::vector<std::string> back_stack;
        std::map<std::string, std::string> params;
        std::map<std::string, std::string> field_texts;   // resource name -> text
        std::map<std::string, int> scroll_offsets;        // screen/resource -> offset
        std::vector<Perturbation> armed;
    };

    AppState& active();
    const AppState& active() const;
    ScreenSnapshot render_current();
    std::string render_text(const AppState& app, const std::string& text) const;
    void navigate(AppState& app, const std::string& to);
    void check_triggers();

    std::map<std::string, AppState> apps_;
    std::string active_package_;
    int perform_count_ = 0;
    std::uint64_t tick_ = 0;
    std::optional<PopupSpec> popup_;
    int loading_ticks_left_ = 0;
    std::optional<std::uint32_t> shuffle_seed_;
};

}  // namespace uitasker
