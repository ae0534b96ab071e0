#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace uitasker {

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    long long area() const { return static_cast<long long>(w) * h; }

    bool contains(const Rect& inner) const {
        return x <= inner.x && y <= inner.y &&
               x + w >= inner.x + inner.w && y + h >= inner.y + inner.h;
    }

    bool intersects(const Rect& other) const {
        return x < other.x + other.w && other.x < x + w &&
               y < other.y + other.h && other.y < y + h;
    }

    bool operator==(const Rect&) const = default;
};

enum class WidgetClass {
    Button,
    TextField,
    Icon,
    Image,
    Label,
    List,
    Container,
    Checkbox,
    ProgressIndicator,
    Other,
};

std::string to_string(WidgetClass c);
// Unknown names map to WidgetClass::Other.
WidgetClass widget_class_from_string(const std::string& name);

// Per-element capability flags, mirroring the snapshot schema strings.
namespace caps {
inline constexpr std::uint8_t kClickable = 1u << 0;
inline constexpr std::uint8_t kTextEditable = 1u << 1;
inline constexpr std::uint8_t kScrollable = 1u << 2;
inline constexpr std::uint8_t kLongClickable = 1u << 3;
}  // namespace caps

using CapabilityMask = std::uint8_t;

std::string capabilities_to_string(CapabilityMask mask);

enum class ActionKind {
    Press,
    EnterText,
    Scroll,
    Swipe,
    Open,
    Back,
    Done,
};

enum class Direction { None, Up, Down, Left, Right };

std::string to_string(ActionKind k);
std::string to_string(Direction d);

// One executable device action. `payload` carries the entered text for
// EnterText and the app name for Open; `direction` applies to Scroll/Swipe.
struct Action {
    ActionKind kind = ActionKind::Press;
    std::string payload;
    Direction direction = Direction::None;

    bool operator==(const Action&) const = default;
};

inline Action press_action() { return {ActionKind::Press, "", Direction::None}; }
inline Action enter_text_action(std::string text) {
    return {ActionKind::EnterText, std::move(text), Direction::None};
}
inline Action scroll_action(Direction d) { return {ActionKind::Scroll, "", d}; }
inline Action swipe_action(Direction d) { return {ActionKind::Swipe, "", d}; }
inline Action open_action(std::string app) {
    return {ActionKind::Open, std::move(app), Direction::None};
}
inline Action back_action() { return {ActionKind::Back, "", Direction::None}; }
inline Action done_action() { return {ActionKind::Done, "", Direction::None}; }

// True for actions that operate on a concrete on-screen element.
bool action_needs_target(ActionKind k);
// Capability an element must expose to accept the action (0 when none).
CapabilityMask required_capability(ActionKind k);

// Canonical single-line rendering, e.g. `ENTER_TEXT 'chest fly'`.
std::string format_action(const Action& a);
// Parses the canonical rendering (case-insensitive keywords, quoted or bare
// payloads). Throws UnparseableResponse when no action grammar matches.
Action parse_action_text(const std::string& text);

struct QuantizedBounds {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    bool operator==(const QuantizedBounds&) const = default;
};

// How a recorded edge re-finds its target on a live screen. Fields are tried
// in declaration order: resource name, then derived label, then grid bounds.
struct TargetLocator {
    std::string resource_name;
    std::string label;
    std::optional<QuantizedBounds> bounds;

    bool operator==(const TargetLocator&) const = default;
};

std::string to_string(const TargetLocator& loc);

// Action plus the locator it was (or will be) aimed at.
struct UiAction {
    Action action;
    std::optional<TargetLocator> target;

    bool operator==(const UiAction&) const = default;
};

std::string format_ui_action(const UiAction& a);

}  // namespace uitasker
