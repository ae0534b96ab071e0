#include "uitasker/types.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "uitasker/errors.hpp"

namespace uitasker {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::optional<Direction> direction_from_string(const std::string& raw) {
    std::string d = lower(trim(raw));
    if (d == "up") return Direction::Up;
    if (d == "down") return Direction::Down;
    if (d == "left") return Direction::Left;
    if (d == "right") return Direction::Right;
    return std::nullopt;
}

// Payload grammar: quoted with ' or " (content up to the last matching
// quote), otherwise the rest of the text verbatim.
std::string extract_payload(const std::string& rest) {
    std::string t = trim(rest);
    if (t.size() >= 2 && (t.front() == '\'' || t.front() == '"')) {
        char q = t.front();
        size_t close = t.rfind(q);
        if (close > 0) return t.substr(1, close - 1);
    }
    return t;
}

}  // namespace

std::string to_string(WidgetClass c) {
    switch (c) {
        case WidgetClass::Button: return "button";
        case WidgetClass::TextField: return "text-field";
        case WidgetClass::Icon: return "icon";
        case WidgetClass::Image: return "image";
        case WidgetClass::Label: return "label";
        case WidgetClass::List: return "list";
        case WidgetClass::Container: return "container";
        case WidgetClass::Checkbox: return "checkbox";
        case WidgetClass::ProgressIndicator: return "progress-indicator";
        case WidgetClass::Other: return "other";
    }
    return "other";
}

WidgetClass widget_class_from_string(const std::string& name) {
    std::string n = lower(trim(name));
    if (n == "button") return WidgetClass::Button;
    if (n == "text-field") return WidgetClass::TextField;
    if (n == "icon") return WidgetClass::Icon;
    if (n == "image") return WidgetClass::Image;
    if (n == "label") return WidgetClass::Label;
    if (n == "list") return WidgetClass::List;
    if (n == "container") return WidgetClass::Container;
    if (n == "checkbox") return WidgetClass::Checkbox;
    if (n == "progress-indicator") return WidgetClass::ProgressIndicator;
    return WidgetClass::Other;
}

std::string capabilities_to_string(CapabilityMask mask) {
    static constexpr std::array<std::pair<CapabilityMask, const char*>, 4> kNames = {{
        {caps::kClickable, "CLICKABLE"},
        {caps::kTextEditable, "TEXT_EDITABLE"},
        {caps::kScrollable, "SCROLLABLE"},
        {caps::kLongClickable, "LONG_CLICKABLE"},
    }};
    std::string out;
    for (const auto& [bit, name] : kNames) {
        if (mask & bit) {
            if (!out.empty()) out += ",";
            out += name;
        }
    }
    return out;
}

std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::Press: return "PRESS";
        case ActionKind::EnterText: return "ENTER_TEXT";
        case ActionKind::Scroll: return "SCROLL";
        case ActionKind::Swipe: return "SWIPE";
        case ActionKind::Open: return "OPEN";
        case ActionKind::Back: return "BACK";
        case ActionKind::Done: return "DONE";
    }
    return "PRESS";
}

std::string to_string(Direction d) {
    switch (d) {
        case Direction::None: return "";
        case Direction::Up: return "UP";
        case Direction::Down: return "DOWN";
        case Direction::Left: return "LEFT";
        case Direction::Right: return "RIGHT";
    }
    return "";
}

bool action_needs_target(ActionKind k) {
    return k == ActionKind::Press || k == ActionKind::EnterText ||
           k == ActionKind::Scroll;
}

CapabilityMask required_capability(ActionKind k) {
    switch (k) {
        case ActionKind::Press: return caps::kClickable;
        case ActionKind::EnterText: return caps::kTextEditable;
        case ActionKind::Scroll: return caps::kScrollable;
        default: return 0;
    }
}

std::string format_action(const Action& a) {
    switch (a.kind) {
        case ActionKind::Press: return "PRESS";
        case ActionKind::EnterText: return "ENTER_TEXT '" + a.payload + "'";
        case ActionKind::Scroll: return "SCROLL " + to_string(a.direction);
        case ActionKind::Swipe: return "SWIPE " + to_string(a.direction);
        case ActionKind::Open: return "OPEN '" + a.payload + "'";
        case ActionKind::Back: return "BACK";
        case ActionKind::Done: return "DONE";
    }
    return "PRESS";
}

Action parse_action_text(const std::string& text) {
    std::string t = trim(text);
    // Tolerate a single trailing sentence terminator.
    while (!t.empty() && (t.back() == '.' || t.back() == '!')) t.pop_back();
    t = trim(t);
    if (t.empty()) throw UnparseableResponse("empty action text");

    size_t sp = t.find_first_of(" \t");
    std::string head = upper(sp == std::string::npos ? t : t.substr(0, sp));
    std::string rest = sp == std::string::npos ? "" : t.substr(sp + 1);

    if (head == "PRESS") {
        if (!trim(rest).empty())
            throw UnparseableResponse("PRESS takes no inline argument: " + text);
        return press_action();
    }
    if (head == "ENTER_TEXT" || head == "ENTER") {
        std::string payload = extract_payload(rest);
        if (payload.empty())
            throw UnparseableResponse("ENTER_TEXT requires a nonempty payload: " + text);
        return enter_text_action(payload);
    }
    if (head == "SCROLL" || head == "SWIPE") {
        auto dir = direction_from_string(rest);
        if (!dir)
            throw UnparseableResponse(head + " requires a direction: " + text);
        return head == "SCROLL" ? scroll_action(*dir) : swipe_action(*dir);
    }
    if (head == "OPEN") {
        std::string app = extract_payload(rest);
        if (app.empty())
            throw UnparseableResponse("OPEN requires an app name: " + text);
        return open_action(app);
    }
    if (head == "BACK") return back_action();
    if (head == "DONE") return done_action();
    throw UnparseableResponse("no action grammar matches: " + text);
}

std::string to_string(const TargetLocator& loc) {
    std::string out;
    if (!loc.resource_name.empty()) out += "res=" + loc.resource_name;
    if (!loc.label.empty()) {
        if (!out.empty()) out += " ";
        out += "label='" + loc.label + "'";
    }
    if (loc.bounds) {
        if (!out.empty()) out += " ";
        out += "grid=(" + std::to_string(loc.bounds->x1) + "," +
               std::to_string(loc.bounds->y1) + "," + std::to_string(loc.bounds->x2) +
               "," + std::to_string(loc.bounds->y2) + ")";
    }
    return out;
}

std::string format_ui_action(const UiAction& a) {
    std::string out = format_action(a.action);
    if (a.target) {
        std::string loc = to_string(*a.target);
        if (!loc.empty()) out += " on [" + loc + "]";
    }
    return out;
}

}  // namespace uitasker
