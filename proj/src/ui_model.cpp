#include "uitasker/ui_model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uitasker/errors.hpp"

namespace uitasker {

namespace {

using nlohmann::json;

CapabilityMask parse_capabilities(const json& arr, const std::string& where) {
    CapabilityMask mask = 0;
    for (const auto& item : arr) {
        if (!item.is_string())
            throw MalformedSnapshot(where + ": actions must be strings");
        std::string name = item.get<std::string>();
        if (name == "CLICKABLE") mask |= caps::kClickable;
        else if (name == "TEXT_EDITABLE") mask |= caps::kTextEditable;
        else if (name == "SCROLLABLE") mask |= caps::kScrollable;
        else if (name == "LONG_CLICKABLE") mask |= caps::kLongClickable;
        else throw MalformedSnapshot(where + ": unknown action '" + name + "'");
    }
    return mask;
}

UiElement parse_element(const json& node, const std::string& where, int depth) {
    if (depth > 64)
        throw MalformedSnapshot(where + ": tree nesting exceeds 64 levels");
    if (!node.is_object())
        throw MalformedSnapshot(where + ": element must be an object");

    UiElement e;
    e.widget_class = widget_class_from_string(node.value("class", "other"));
    e.text = node.value("text", "");
    e.content_desc = node.value("content_desc", "");
    e.resource_name = node.value("resource_name", "");

    if (!node.contains("bounds"))
        throw MalformedSnapshot(where + ": missing bounds");
    const auto& b = node.at("bounds");
    if (!b.is_array() || b.size() != 4)
        throw MalformedSnapshot(where + ": bounds must be [x, y, w, h]");
    e.bounds = Rect{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    if (e.bounds.w < 0 || e.bounds.h < 0)
        throw MalformedSnapshot(where + ": negative bounds dimensions");

    if (node.contains("actions"))
        e.allowed_actions = parse_capabilities(node.at("actions"), where);
    if (node.contains("id")) {
        if (!node.at("id").is_number_integer())
            throw MalformedSnapshot(where + ": id must be an integer");
        e.id = node.at("id").get<int>();
    } else {
        e.id = -1;  // assigned below
    }

    if (node.contains("children")) {
        const auto& kids = node.at("children");
        if (!kids.is_array())
            throw MalformedSnapshot(where + ": children must be an array");
        int i = 0;
        for (const auto& kid : kids) {
            e.children.push_back(
                parse_element(kid, where + ".children[" + std::to_string(i) + "]", depth + 1));
            ++i;
        }
    }
    return e;
}

void assign_ids_preorder(UiElement& e, int& next) {
    e.id = next++;
    for (auto& c : e.children) assign_ids_preorder(c, next);
}

void check_ids_complete(const UiElement& e, std::set<int>& seen) {
    if (e.id < 0)
        throw MalformedSnapshot("mixed explicit and missing element ids");
    if (!seen.insert(e.id).second)
        throw MalformedSnapshot("duplicate element id " + std::to_string(e.id));
    for (const auto& c : e.children) check_ids_complete(c, seen);
}

bool any_id_missing(const UiElement& e) {
    if (e.id < 0) return true;
    for (const auto& c : e.children)
        if (any_id_missing(c)) return true;
    return false;
}

// --- noise filtering -------------------------------------------------------

bool fully_outside(const Rect& r, const Rect& screen) { return !r.intersects(screen); }

void collect_rects(const UiElement& e, std::vector<Rect>& out) {
    out.push_back(e.bounds);
    for (const auto& c : e.children) collect_rects(c, out);
}

// Later siblings occlude earlier ones (document order is draw order).
bool covered_by_later_sibling(const UiElement& e, const std::vector<UiElement>& siblings,
                              size_t index) {
    for (size_t j = index + 1; j < siblings.size(); ++j) {
        std::vector<Rect> rects;
        collect_rects(siblings[j], rects);
        for (const Rect& r : rects)
            if (r.contains(e.bounds)) return true;
    }
    return false;
}

void drop_out_of_bounds(UiElement& e, const Rect& screen) {
    std::vector<UiElement> kept;
    kept.reserve(e.children.size());
    for (auto& c : e.children) {
        if (c.bounds.w <= 0 || c.bounds.h <= 0) continue;
        if (fully_outside(c.bounds, screen)) continue;
        drop_out_of_bounds(c, screen);
        kept.push_back(std::move(c));
    }
    e.children = std::move(kept);
}

void drop_occluded(UiElement& e) {
    std::vector<bool> keep(e.children.size(), true);
    for (size_t i = 0; i < e.children.size(); ++i)
        if (covered_by_later_sibling(e.children[i], e.children, i)) keep[i] = false;
    std::vector<UiElement> kept;
    kept.reserve(e.children.size());
    for (size_t i = 0; i < e.children.size(); ++i)
        if (keep[i]) kept.push_back(std::move(e.children[i]));
    e.children = std::move(kept);
    for (auto& c : e.children) drop_occluded(c);
}

bool is_removable_empty_container(const UiElement& e) {
    return e.widget_class == WidgetClass::Container && e.children.empty() &&
           e.text.empty() && e.content_desc.empty() &&
           (e.allowed_actions & caps::kClickable) == 0;
}

void drop_empty_containers(UiElement& e) {
    for (auto& c : e.children) drop_empty_containers(c);
    std::vector<UiElement> kept;
    kept.reserve(e.children.size());
    for (auto& c : e.children)
        if (!is_removable_empty_container(c)) kept.push_back(std::move(c));
    e.children = std::move(kept);
}

// --- PII detection ---------------------------------------------------------

const std::regex& email_re() {
    static const std::regex re(R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})");
    return re;
}

// Candidate digit run; classified as card or phone by digit count and Luhn.
const std::regex& digit_run_re() {
    static const std::regex re(R"(\+?[0-9][0-9()\-. ]{4,28}[0-9])");
    return re;
}

const std::regex& address_re() {
    static const std::regex re(
        R"([0-9]{1,5} [A-Za-z][A-Za-z']*( [A-Za-z][A-Za-z']*)? )"
        R"((Street|St|Avenue|Ave|Road|Rd|Boulevard|Blvd|Lane|Ln|Drive|Dr|Court|Ct|Way|Place|Pl|Terrace|Square|Sq)\b)",
        std::regex::icase);
    return re;
}

int digit_count(const std::string& s) {
    return static_cast<int>(std::count_if(s.begin(), s.end(),
                                          [](unsigned char c) { return std::isdigit(c); }));
}

bool luhn_valid(const std::string& s) {
    int sum = 0;
    int pos = 0;
    for (auto it = s.rbegin(); it != s.rend(); ++it) {
        if (!std::isdigit(static_cast<unsigned char>(*it))) continue;
        int d = *it - '0';
        if (pos % 2 == 1) {
            d *= 2;
            if (d > 9) d -= 9;
        }
        sum += d;
        ++pos;
    }
    return pos > 0 && sum % 10 == 0;
}

struct PiiMatch {
    size_t pos = std::string::npos;
    size_t len = 0;
    const char* tag = nullptr;
};

std::optional<PiiMatch> first_match(const std::string& text, size_t from) {
    std::optional<PiiMatch> best;
    int best_priority = 0;
    auto consider = [&](size_t pos, size_t len, const char* tag, int priority) {
        // Earliest match wins; ties resolved by detector priority.
        if (!best || pos < best->pos || (pos == best->pos && priority < best_priority)) {
            best = PiiMatch{pos, len, tag};
            best_priority = priority;
        }
    };

    std::smatch m;
    std::string tail = text.substr(from);
    if (std::regex_search(tail, m, email_re()))
        consider(from + m.position(0), m.length(0), kTagEmail, 0);

    // Digit runs: scan successive candidates because a run may fail both the
    // card and the phone test (too few digits) while a later one matches.
    size_t scan = from;
    while (scan < text.size()) {
        std::string rest = text.substr(scan);
        std::smatch dm;
        if (!std::regex_search(rest, dm, digit_run_re())) break;
        size_t pos = scan + dm.position(0);
        std::string run = dm.str(0);
        int digits = digit_count(run);
        if (digits >= 13 && digits <= 19 && luhn_valid(run)) {
            consider(pos, run.size(), kTagCard, 1);
            break;
        }
        if (digits >= 7) {
            consider(pos, run.size(), kTagPhone, 2);
            break;
        }
        scan = pos + run.size();
    }

    if (std::regex_search(tail, m, address_re()))
        consider(from + m.position(0), m.length(0), kTagAddress, 3);

    return best;
}

std::string redact_text(const std::string& text, int element_id,
                        std::vector<Redaction>& out) {
    std::string result;
    size_t cursor = 0;
    while (cursor < text.size()) {
        auto m = first_match(text, cursor);
        if (!m) break;
        result += text.substr(cursor, m->pos - cursor);
        out.push_back(Redaction{text.substr(m->pos, m->len), m->tag, element_id});
        result += m->tag;
        cursor = m->pos + m->len;
    }
    result += text.substr(cursor);
    return result;
}

void anonymize_element(UiElement& e, std::vector<Redaction>& out) {
    if (!e.text.empty()) e.text = redact_text(e.text, e.id, out);
    for (auto& c : e.children) anonymize_element(c, out);
}

UiElement* find_element_mut(UiElement& e, int id) {
    if (e.id == id) return &e;
    for (auto& c : e.children)
        if (UiElement* found = find_element_mut(c, id)) return found;
    return nullptr;
}

// --- label humanization ----------------------------------------------------

std::string humanize_resource_name(const std::string& resource) {
    std::string name = resource;
    // Android-style "pkg:id/name" prefixes.
    if (size_t slash = name.rfind('/'); slash != std::string::npos)
        name = name.substr(slash + 1);
    for (const char* prefix : {"ic_", "btn_", "iv_"}) {
        if (name.rfind(prefix, 0) == 0) {
            name = name.substr(std::string(prefix).size());
            break;
        }
    }
    std::string out;
    for (size_t i = 0; i < name.size(); ++i) {
        char c = name[i];
        if (c == '_' || c == '-') {
            if (!out.empty() && out.back() != ' ') out += ' ';
            continue;
        }
        if (std::isupper(static_cast<unsigned char>(c)) && i > 0 &&
            std::islower(static_cast<unsigned char>(name[i - 1]))) {
            out += ' ';
        }
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// --- fingerprint -----------------------------------------------------------

void collect_tokens(const UiElement& e, int width, int height, bool blank_text,
                    std::vector<std::string>& out) {
    QuantizedBounds q = quantize_bounds(e.bounds, width, height);
    std::string token = to_string(e.widget_class);
    token += '|';
    if (!blank_text) token += derive_label(e);
    token += '|';
    token += std::to_string(q.x1) + "," + std::to_string(q.y1) + "," +
             std::to_string(q.x2) + "," + std::to_string(q.y2);
    out.push_back(std::move(token));
    for (const auto& c : e.children) collect_tokens(c, width, height, blank_text, out);
}

ScreenFingerprint simhash_tokens(const std::vector<std::string>& tokens) {
    int counts[64] = {0};
    for (const auto& t : tokens) {
        std::uint64_t h = fnv1a64(t);
        for (int b = 0; b < 64; ++b)
            counts[b] += (h >> b) & 1u ? 1 : -1;
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 64; ++b)
        if (counts[b] > 0) bits |= (std::uint64_t{1} << b);
    return ScreenFingerprint{bits, static_cast<int>(tokens.size())};
}

void serialize_element(const UiElement& e, int depth, std::vector<std::string>& lines) {
    std::string label = derive_label(e);
    std::string escaped;
    for (char c : label) {
        if (c == '"') escaped += "\\\"";
        else escaped += c;
    }
    std::ostringstream line;
    line << std::string(static_cast<size_t>(depth) * 2, ' ') << '[' << e.id << "] "
         << to_string(e.widget_class) << " \"" << escaped << "\" (" << e.bounds.x
         << ',' << e.bounds.y << ',' << e.bounds.w << ',' << e.bounds.h << ") {"
         << capabilities_to_string(e.allowed_actions) << '}';
    lines.push_back(line.str());
    for (const auto& c : e.children) serialize_element(c, depth + 1, lines);
}

}  // namespace

std::string to_string(Orientation o) {
    return o == Orientation::Portrait ? "portrait" : "landscape";
}

bool content_equals(const ScreenSnapshot& a, const ScreenSnapshot& b) {
    return a.app_name == b.app_name && a.package_name == b.package_name &&
           a.activity_name == b.activity_name && a.width == b.width &&
           a.height == b.height && a.orientation == b.orientation && a.root == b.root;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

ScreenSnapshot parse_snapshot(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw MalformedSnapshot(std::string("invalid snapshot document: ") + e.what());
    }
    if (!doc.is_object()) throw MalformedSnapshot("snapshot document must be an object");

    ScreenSnapshot s;
    s.app_name = doc.value("app_name", "");
    s.package_name = doc.value("package_name", "");
    s.activity_name = doc.value("activity_name", "");

    if (!doc.contains("resolution"))
        throw MalformedSnapshot("missing resolution");
    const auto& res = doc.at("resolution");
    if (!res.is_array() || res.size() != 2)
        throw MalformedSnapshot("resolution must be [width, height]");
    s.width = res[0].get<int>();
    s.height = res[1].get<int>();
    if (s.width <= 0 || s.height <= 0)
        throw MalformedSnapshot("resolution must be strictly positive");

    if (doc.contains("orientation")) {
        std::string o = doc.at("orientation").get<std::string>();
        if (o == "portrait") s.orientation = Orientation::Portrait;
        else if (o == "landscape") s.orientation = Orientation::Landscape;
        else throw MalformedSnapshot("orientation must be portrait or landscape");
    } else {
        s.orientation = s.width > s.height ? Orientation::Landscape : Orientation::Portrait;
    }

    if (!doc.contains("root")) throw MalformedSnapshot("missing root element");
    s.root = parse_element(doc.at("root"), "root", 0);
    s.captured_at = doc.value("captured_at", std::uint64_t{0});

    if (any_id_missing(s.root)) {
        // Mixed explicit/missing ids are ambiguous; require all-or-none.
        bool any_present = false;
        for_each_element(s.root, [&](const UiElement& e) {
            if (e.id >= 0) any_present = true;
        });
        if (any_present)
            throw MalformedSnapshot("mixed explicit and missing element ids");
        int next = 0;
        assign_ids_preorder(s.root, next);
    } else {
        std::set<int> seen;
        check_ids_complete(s.root, seen);
    }
    return s;
}

ScreenSnapshot filter_noise(const ScreenSnapshot& s) {
    ScreenSnapshot out = s;
    Rect screen{0, 0, out.width, out.height};

    // The root always survives, clamped into the screen rectangle.
    int x1 = std::clamp(out.root.bounds.x, 0, out.width);
    int y1 = std::clamp(out.root.bounds.y, 0, out.height);
    int x2 = std::clamp(out.root.bounds.x + out.root.bounds.w, 0, out.width);
    int y2 = std::clamp(out.root.bounds.y + out.root.bounds.h, 0, out.height);
    out.root.bounds = Rect{x1, y1, x2 - x1, y2 - y1};

    drop_out_of_bounds(out.root, screen);
    drop_occluded(out.root);
    drop_empty_containers(out.root);
    return out;
}

std::string derive_label(const UiElement& e) {
    if (!e.text.empty()) return e.text;
    if (!e.content_desc.empty()) return e.content_desc;
    if (!e.resource_name.empty()) {
        std::string humanized = humanize_resource_name(e.resource_name);
        if (!humanized.empty()) return humanized;
    }
    return to_string(e.widget_class);
}

std::pair<ScreenSnapshot, RedactionMap> anonymize(const ScreenSnapshot& s) {
    ScreenSnapshot out = s;
    RedactionMap map;
    anonymize_element(out.root, map.substitutions);
    return {out, map};
}

ScreenSnapshot restore_redactions(const ScreenSnapshot& s, const RedactionMap& map) {
    ScreenSnapshot out = s;
    // Substitutions were recorded left-to-right per element; restoring the
    // first remaining tag occurrence in the same order is exact.
    for (const auto& sub : map.substitutions) {
        UiElement* e = find_element_mut(out.root, sub.element_id);
        if (!e) continue;
        size_t pos = e->text.find(sub.tag);
        if (pos == std::string::npos) continue;
        e->text = e->text.substr(0, pos) + sub.original + e->text.substr(pos + sub.tag.size());
    }
    return out;
}

int quantize_coord(int v, int axis_size) {
    if (axis_size <= 0) return 0;
    long long cell = static_cast<long long>(v) * 8 / axis_size;
    return static_cast<int>(std::clamp<long long>(cell, 0, 7));
}

QuantizedBounds quantize_bounds(const Rect& r, int width, int height) {
    return QuantizedBounds{
        quantize_coord(r.x, width),
        quantize_coord(r.y, height),
        quantize_coord(r.x + r.w, width),
        quantize_coord(r.y + r.h, height),
    };
}

ScreenFingerprint fingerprint(const ScreenSnapshot& s) {
    std::vector<std::string> tokens;
    collect_tokens(s.root, s.width, s.height, /*blank_text=*/false, tokens);
    return simhash_tokens(tokens);
}

ScreenFingerprint layout_signature(const ScreenSnapshot& s) {
    std::vector<std::string> tokens;
    collect_tokens(s.root, s.width, s.height, /*blank_text=*/true, tokens);
    return simhash_tokens(tokens);
}

int hamming(const ScreenFingerprint& a, const ScreenFingerprint& b) {
    return std::popcount(a.bits ^ b.bits);
}

std::string serialize_for_prompt(const ScreenSnapshot& s) {
    std::vector<std::string> lines;
    serialize_element(s.root, 0, lines);
    std::string out;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i) out += '\n';
        out += lines[i];
    }
    return out;
}

void for_each_element(const UiElement& root,
                      const std::function<void(const UiElement&)>& fn) {
    fn(root);
    for (const auto& c : root.children) for_each_element(c, fn);
}

const UiElement* find_element(const ScreenSnapshot& s, int id) {
    const UiElement* found = nullptr;
    for_each_element(s.root, [&](const UiElement& e) {
        if (!found && e.id == id) found = &e;
    });
    return found;
}

int count_elements(const ScreenSnapshot& s) {
    int n = 0;
    for_each_element(s.root, [&](const UiElement&) { ++n; });
    return n;
}

}  // namespace uitasker
