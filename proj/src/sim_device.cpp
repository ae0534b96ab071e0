#include "uitasker/sim_device.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uitasker/errors.hpp"

namespace uitasker {

namespace {

using nlohmann::json;

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

int line_of_offset(const std::string& text, size_t offset) {
    int line = 1;
    for (size_t i = 0; i < offset && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

CapabilityMask parse_caps(const json& arr, const std::string& where) {
    CapabilityMask mask = 0;
    for (const auto& item : arr) {
        std::string name = item.get<std::string>();
        if (name == "CLICKABLE") mask |= caps::kClickable;
        else if (name == "TEXT_EDITABLE") mask |= caps::kTextEditable;
        else if (name == "SCROLLABLE") mask |= caps::kScrollable;
        else if (name == "LONG_CLICKABLE") mask |= caps::kLongClickable;
        else throw SpecError(where + ": unknown action capability '" + name + "'");
    }
    return mask;
}

ElementTemplate parse_element_template(const json& node, const std::string& where) {
    if (!node.is_object()) throw SpecError(where + ": element must be an object");
    ElementTemplate e;
    e.widget_class = widget_class_from_string(node.value("class", "other"));
    e.text = node.value("text", "");
    e.content_desc = node.value("content_desc", "");
    e.resource_name = node.value("resource_name", "");
    if (!node.contains("bounds") || !node.at("bounds").is_array() ||
        node.at("bounds").size() != 4)
        throw SpecError(where + ": bounds must be [x, y, w, h]");
    const auto& b = node.at("bounds");
    e.bounds = Rect{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    if (node.contains("actions")) e.allowed_actions = parse_caps(node.at("actions"), where);
    if (node.contains("children")) {
        int i = 0;
        for (const auto& kid : node.at("children")) {
            e.children.push_back(
                parse_element_template(kid, where + ".children[" + std::to_string(i) + "]"));
            ++i;
        }
    }
    return e;
}

ActionKind parse_action_kind(const std::string& name, const std::string& where) {
    std::string n = name;
    std::transform(n.begin(), n.end(), n.begin(), ::toupper);
    if (n == "PRESS") return ActionKind::Press;
    if (n == "ENTER_TEXT" || n == "ENTER") return ActionKind::EnterText;
    if (n == "SCROLL") return ActionKind::Scroll;
    if (n == "SWIPE") return ActionKind::Swipe;
    if (n == "OPEN") return ActionKind::Open;
    if (n == "BACK") return ActionKind::Back;
    throw SpecError(where + ": unknown action '" + name + "'");
}

Direction parse_direction(const std::string& name, const std::string& where) {
    std::string n = lower(name);
    if (n == "up") return Direction::Up;
    if (n == "down") return Direction::Down;
    if (n == "left") return Direction::Left;
    if (n == "right") return Direction::Right;
    throw SpecError(where + ": unknown direction '" + name + "'");
}

bool template_matches_target(const ElementTemplate& e, const std::string& target) {
    if (!e.resource_name.empty() && e.resource_name == target) return true;
    // Fall back on the visible label sources.
    return e.text == target || e.content_desc == target;
}

bool screen_has_target(const ScreenTemplate& screen, const std::string& target) {
    std::vector<const ElementTemplate*> stack;
    for (const auto& e : screen.elements) stack.push_back(&e);
    while (!stack.empty()) {
        const ElementTemplate* e = stack.back();
        stack.pop_back();
        if (template_matches_target(*e, target)) return true;
        for (const auto& c : e->children) stack.push_back(&c);
    }
    return false;
}

// Pinned Fisher-Yates with an LCG so shuffles are identical across platforms.
std::vector<size_t> shuffled_indices(size_t n, std::uint32_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::uint64_t state = seed * 6364136223846793005ull + 1442695040888963407ull;
    for (size_t i = n; i > 1; --i) {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        size_t j = static_cast<size_t>((state >> 33) % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

AppSpec parse_app_spec(const std::string& json_text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SpecError(origin + ":" + std::to_string(line_of_offset(json_text, e.byte)) +
                        ": " + e.what());
    }

    AppSpec spec;
    spec.app_name = doc.value("app_name", "");
    spec.package_name = doc.value("package_name", "");
    if (spec.app_name.empty() || spec.package_name.empty())
        throw SpecError(origin + ": app_name and package_name are required");
    if (doc.contains("resolution")) {
        spec.width = doc.at("resolution").at(0).get<int>();
        spec.height = doc.at("resolution").at(1).get<int>();
    }

    if (!doc.contains("screens") || !doc.at("screens").is_object())
        throw SpecError(origin + ": screens object is required");
    for (const auto& [name, body] : doc.at("screens").items()) {
        ScreenTemplate screen;
        screen.name = name;
        screen.activity = body.value("activity", name + "Activity");
        if (body.contains("elements")) {
            int i = 0;
            for (const auto& e : body.at("elements")) {
                screen.elements.push_back(parse_element_template(
                    e, origin + ": screen '" + name + "' element " + std::to_string(i)));
                ++i;
            }
        }
        spec.screens[name] = std::move(screen);
    }

    spec.initial_screen = doc.value("initial_screen", "");
    if (spec.initial_screen.empty())
        throw SpecError(origin + ": initial_screen is required");
    if (!spec.screens.count(spec.initial_screen))
        throw SpecError(origin + ": initial_screen '" + spec.initial_screen +
                        "' is not declared");

    if (doc.contains("transitions")) {
        int i = 0;
        for (const auto& t : doc.at("transitions")) {
            std::string where = origin + ": transition " + std::to_string(i);
            TransitionRule rule;
            rule.from = t.value("from", "");
            rule.to = t.value("to", "");
            rule.action = parse_action_kind(t.value("action", ""), where);
            if (t.contains("direction"))
                rule.direction = parse_direction(t.at("direction").get<std::string>(), where);
            rule.target = t.value("target", "");
            rule.capture = t.value("capture", "");
            if (!spec.screens.count(rule.from))
                throw SpecError(where + ": undeclared source screen '" + rule.from + "'");
            if (!spec.screens.count(rule.to))
                throw SpecError(where + ": undeclared destination screen '" + rule.to + "'");
            if (!rule.target.empty() &&
                !screen_has_target(spec.screens.at(rule.from), rule.target))
                throw SpecError(where + ": screen '" + rule.from +
                                "' has no element matching target '" + rule.target + "'");
            spec.transitions.push_back(std::move(rule));
            ++i;
        }
    }

    if (doc.contains("perturbations")) {
        int i = 0;
        for (const auto& p : doc.at("perturbations")) {
            std::string where = origin + ": perturbation " + std::to_string(i);
            Perturbation pert;
            pert.trigger_step = p.value("trigger_step", 0);
            if (pert.trigger_step <= 0)
                throw SpecError(where + ": trigger_step must be positive");
            if (p.contains("popup")) {
                PopupSpec popup;
                popup.message = p.at("popup").value("message", popup.message);
                popup.sticky = p.at("popup").value("sticky", false);
                pert.popup = popup;
            }
            pert.loading_ticks = p.value("loading_ticks", 0);
            if (p.contains("shuffle_seed"))
                pert.shuffle_seed = p.at("shuffle_seed").get<std::uint32_t>();
            spec.perturbations.push_back(pert);
            ++i;
        }
    }
    return spec;
}

AppSpec load_app_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open app spec " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_app_spec(buf.str(), path);
}

// --- device ------------------------------------------------------------------

void SimDevice::load_app(const AppSpec& spec) {
    AppState state;
    state.spec = spec;
    state.current = spec.initial_screen;
    state.armed = spec.perturbations;
    apps_[spec.package_name] = std::move(state);
    if (active_package_.empty()) active_package_ = spec.package_name;
}

void SimDevice::load_app_file(const std::string& path) { load_app(load_app_spec(path)); }

void SimDevice::reset() {
    for (auto& [pkg, app] : apps_) {
        app.current = app.spec.initial_screen;
        app.back_stack.clear();
        app.params.clear();
        app.field_texts.clear();
        app.scroll_offsets.clear();
        app.armed = app.spec.perturbations;
    }
    if (!apps_.empty() && !apps_.count(active_package_))
        active_package_ = apps_.begin()->first;
    perform_count_ = 0;
    tick_ = 0;
    popup_.reset();
    loading_ticks_left_ = 0;
    shuffle_seed_.reset();
}

void SimDevice::add_perturbation(const Perturbation& p) { active().armed.push_back(p); }

SimDevice::AppState& SimDevice::active() {
    auto it = apps_.find(active_package_);
    if (it == apps_.end()) throw InvalidArgument("no app loaded into the simulator");
    return it->second;
}

const SimDevice::AppState& SimDevice::active() const {
    auto it = apps_.find(active_package_);
    if (it == apps_.end()) throw InvalidArgument("no app loaded into the simulator");
    return it->second;
}

std::string SimDevice::current_screen_name() const { return active().current; }

std::string SimDevice::render_text(const AppState& app, const std::string& text) const {
    std::string out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t open = text.find('{', pos);
        if (open == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        size_t close = text.find('}', open);
        if (close == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        out += text.substr(pos, open - pos);
        std::string key = text.substr(open + 1, close - open - 1);
        auto it = app.params.find(key);
        if (it != app.params.end()) out += it->second;
        pos = close + 1;
    }
    return out;
}

namespace {

json element_to_json(const ElementTemplate& e,
                     const std::function<std::string(const std::string&)>& subst,
                     const std::map<std::string, std::string>& field_texts) {
    json node;
    node["class"] = to_string(e.widget_class);
    std::string text = subst(e.text);
    if (!e.resource_name.empty() && (e.allowed_actions & caps::kTextEditable)) {
        auto it = field_texts.find(e.resource_name);
        if (it != field_texts.end()) text = it->second;
    }
    if (!text.empty()) node["text"] = text;
    if (!e.content_desc.empty()) node["content_desc"] = e.content_desc;
    if (!e.resource_name.empty()) node["resource_name"] = e.resource_name;
    node["bounds"] = {e.bounds.x, e.bounds.y, e.bounds.w, e.bounds.h};
    json actions = json::array();
    if (e.allowed_actions & caps::kClickable) actions.push_back("CLICKABLE");
    if (e.allowed_actions & caps::kTextEditable) actions.push_back("TEXT_EDITABLE");
    if (e.allowed_actions & caps::kScrollable) actions.push_back("SCROLLABLE");
    if (e.allowed_actions & caps::kLongClickable) actions.push_back("LONG_CLICKABLE");
    if (!actions.empty()) node["actions"] = actions;
    if (!e.children.empty()) {
        json kids = json::array();
        for (const auto& c : e.children) kids.push_back(element_to_json(c, subst, field_texts));
        node["children"] = kids;
    }
    return node;
}

}  // namespace

ScreenSnapshot SimDevice::render_current() {
    const AppState& app = active();
    const AppSpec& spec = app.spec;

    json doc;
    doc["app_name"] = spec.app_name;
    doc["package_name"] = spec.package_name;
    doc["resolution"] = {spec.width, spec.height};
    doc["captured_at"] = tick_;

    auto subst = [&](const std::string& t) { return render_text(app, t); };

    json root;
    root["class"] = "container";
    root["resource_name"] = "root";
    root["bounds"] = {0, 0, spec.width, spec.height};

    if (popup_) {
        doc["activity_name"] = "PopupOverlay";
        json kids = json::array();
        json msg;
        msg["class"] = "label";
        msg["text"] = popup_->message;
        msg["resource_name"] = "popup_message";
        msg["bounds"] = {140, 700, 800, 300};
        kids.push_back(msg);
        json close;
        close["class"] = "button";
        close["text"] = "close";
        close["resource_name"] = "btn_close";
        close["bounds"] = {440, 1040, 200, 110};
        close["actions"] = {"CLICKABLE"};
        kids.push_back(close);
        root["children"] = kids;
        doc["root"] = root;
        return parse_snapshot(doc.dump());
    }

    const ScreenTemplate& screen = spec.screens.at(app.current);
    doc["activity_name"] = screen.activity;

    std::vector<const ElementTemplate*> ordered;
    for (const auto& e : screen.elements) ordered.push_back(&e);
    if (shuffle_seed_) {
        auto idx = shuffled_indices(ordered.size(), *shuffle_seed_);
        std::vector<const ElementTemplate*> shuffled;
        shuffled.reserve(ordered.size());
        for (size_t i : idx) shuffled.push_back(ordered[i]);
        ordered = std::move(shuffled);
    }

    json kids = json::array();
    for (const ElementTemplate* e : ordered) {
        ElementTemplate copy = *e;
        // Scrollable lists rotate their children by the scroll offset.
        auto offset_it = app.scroll_offsets.find(app.current + "/" + e->resource_name);
        if (offset_it != app.scroll_offsets.end() && !copy.children.empty()) {
            int n = static_cast<int>(copy.children.size());
            int shift = offset_it->second % n;
            std::rotate(copy.children.begin(), copy.children.begin() + shift,
                        copy.children.end());
        }
        kids.push_back(element_to_json(copy, subst, app.field_texts));
    }

    if (loading_ticks_left_ > 0) {
        json spinner;
        spinner["class"] = "progress-indicator";
        spinner["resource_name"] = "loading_spinner";
        spinner["bounds"] = {490, 910, 100, 100};
        kids.push_back(spinner);
    }

    root["children"] = kids;
    doc["root"] = root;
    return parse_snapshot(doc.dump());
}

ScreenSnapshot SimDevice::snapshot() {
    ++tick_;
    ScreenSnapshot snap = render_current();
    if (loading_ticks_left_ > 0) --loading_ticks_left_;
    return snap;
}

std::vector<std::string> SimDevice::installed_apps() {
    std::vector<std::string> out;
    for (const auto& [pkg, app] : apps_) out.push_back(app.spec.app_name);
    return out;
}

void SimDevice::navigate(AppState& app, const std::string& to) {
    if (to == app.current) return;
    app.back_stack.push_back(app.current);
    app.current = to;
}

void SimDevice::check_triggers() {
    AppState& app = active();
    for (const Perturbation& p : app.armed) {
        if (p.trigger_step != perform_count_) continue;
        if (p.popup) popup_ = p.popup;
        if (p.loading_ticks > 0) loading_ticks_left_ = p.loading_ticks;
        if (p.shuffle_seed) shuffle_seed_ = p.shuffle_seed;
    }
}

bool SimDevice::perform(const Action& action, std::optional<int> target) {
    ++perform_count_;
    AppState& app = active();

    // Resolve the target id against the currently visible screen.
    ScreenSnapshot visible = render_current();
    const UiElement* element = target ? find_element(visible, *target) : nullptr;
    if (target && !element) {
        check_triggers();
        return false;
    }

    if (popup_) {
        bool dismissed = false;
        if (action.kind == ActionKind::Press && element &&
            element->resource_name == "btn_close") {
            dismissed = true;
        } else if (action.kind == ActionKind::Back && !popup_->sticky) {
            dismissed = true;
        }
        if (dismissed) popup_.reset();
        check_triggers();
        return true;
    }

    switch (action.kind) {
        case ActionKind::Press:
        case ActionKind::Scroll:
        case ActionKind::Swipe: {
            const TransitionRule* rule = nullptr;
            for (const auto& t : app.spec.transitions) {
                if (t.from != app.current || t.action != action.kind) continue;
                if (t.direction != Direction::None && t.direction != action.direction)
                    continue;
                if (!t.target.empty()) {
                    if (!element) continue;
                    if (element->resource_name != t.target && derive_label(*element) != t.target)
                        continue;
                }
                rule = &t;
                break;
            }
            if (rule) {
                navigate(app, rule->to);
            } else if (action.kind == ActionKind::Scroll && element &&
                       (element->allowed_actions & caps::kScrollable)) {
                std::string key = app.current + "/" + element->resource_name;
                int& offset = app.scroll_offsets[key];
                if (action.direction == Direction::Down || action.direction == Direction::Right) {
                    ++offset;
                } else if (offset > 0) {
                    --offset;
                }
            }
            // Anything else is inert UI: the screen stays as it is.
            break;
        }
        case ActionKind::EnterText: {
            if (element && (element->allowed_actions & caps::kTextEditable) &&
                !element->resource_name.empty()) {
                app.field_texts[element->resource_name] = action.payload;
                for (const auto& t : app.spec.transitions) {
                    if (t.from != app.current || t.action != ActionKind::EnterText) continue;
                    if (!t.target.empty() && element->resource_name != t.target &&
                        derive_label(*element) != t.target)
                        continue;
                    if (!t.capture.empty()) app.params[t.capture] = action.payload;
                    navigate(app, t.to);
                    break;
                }
            }
            break;
        }
        case ActionKind::Open: {
            std::string wanted = lower(action.payload);
            for (auto& [pkg, candidate] : apps_) {
                if (lower(candidate.spec.app_name) == wanted || lower(pkg) == wanted) {
                    active_package_ = pkg;
                    AppState& opened = apps_.at(pkg);
                    opened.current = opened.spec.initial_screen;
                    opened.back_stack.clear();
                    opened.params.clear();
                    opened.field_texts.clear();
                    opened.scroll_offsets.clear();
                    break;
                }
            }
            break;
        }
        case ActionKind::Back: {
            if (!app.back_stack.empty()) {
                app.current = app.back_stack.back();
                app.back_stack.pop_back();
            }
            break;
        }
        case ActionKind::Done:
            break;
    }

    check_triggers();
    return true;
}

ScreenSnapshot SimDevice::render_screen(const std::string& package_name,
                                        const std::string& screen_name) const {
    auto it = apps_.find(package_name);
    if (it == apps_.end()) throw InvalidArgument("unknown package " + package_name);
    const AppSpec& spec = it->second.spec;
    auto screen_it = spec.screens.find(screen_name);
    if (screen_it == spec.screens.end())
        throw InvalidArgument("unknown screen " + screen_name + " in " + package_name);

    json doc;
    doc["app_name"] = spec.app_name;
    doc["package_name"] = spec.package_name;
    doc["activity_name"] = screen_it->second.activity;
    doc["resolution"] = {spec.width, spec.height};

    json root;
    root["class"] = "container";
    root["resource_name"] = "root";
    root["bounds"] = {0, 0, spec.width, spec.height};
    json kids = json::array();
    std::map<std::string, std::string> no_fields;
    auto subst = [](const std::string& t) {
        // Strip placeholders: template render with no captured parameters.
        std::string out;
        size_t pos = 0;
        while (pos < t.size()) {
            size_t open = t.find('{', pos);
            if (open == std::string::npos) {
                out += t.substr(pos);
                break;
            }
            size_t close = t.find('}', open);
            if (close == std::string::npos) {
                out += t.substr(pos);
                break;
            }
            out += t.substr(pos, open - pos);
            pos = close + 1;
        }
        return out;
    };
    for (const auto& e : screen_it->second.elements)
        kids.push_back(element_to_json(e, subst, no_fields));
    root["children"] = kids;
    doc["root"] = root;
    return parse_snapshot(doc.dump());
}

}  // namespace uitasker
