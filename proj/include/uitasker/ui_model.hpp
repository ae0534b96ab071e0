#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "uitasker/types.hpp"

namespace uitasker {

/// One node of the captured UI tree. Ids are snapshot-local and assigned in
/// depth-first preorder when the source document does not carry them.
struct UiElement {
    int id = 0;
    WidgetClass widget_class = WidgetClass::Other;
    std::string text;
    std::string content_desc;
    std::string resource_name;
    Rect bounds;
    CapabilityMask allowed_actions = 0;
    std::vector<UiElement> children;

    bool operator==(const UiElement&) const = default;
};

enum class Orientation { Portrait, Landscape };

std::string to_string(Orientation o);

/// A full device screen capture: app/activity identity, resolution, and the
/// element tree.
struct ScreenSnapshot {
    std::string app_name;
    std::string package_name;
    std::string activity_name;
    int width = 0;
    int height = 0;
    Orientation orientation = Orientation::Portrait;
    UiElement root;
    std::uint64_t captured_at = 0;
};

/// Structural equality ignoring the capture tick.
bool content_equals(const ScreenSnapshot& a, const ScreenSnapshot& b);

/// 64-bit simhash over per-element feature tokens plus the element count.
/// An empty tree hashes to all-zero bits by convention.
struct ScreenFingerprint {
    std::uint64_t bits = 0;
    int element_count = 0;

    bool operator==(const ScreenFingerprint&) const = default;
};

/// Records PII substitutions so the original snapshot text can be restored.
struct Redaction {
    std::string original;
    std::string tag;
    int element_id = 0;

    bool operator==(const Redaction&) const = default;
};

struct RedactionMap {
    std::vector<Redaction> substitutions;

    bool empty() const { return substitutions.empty(); }
};

// PII tags emitted by anonymize().
inline constexpr const char* kTagPhone = "<phone number>";
inline constexpr const char* kTagEmail = "<email>";
inline constexpr const char* kTagAddress = "<address>";
inline constexpr const char* kTagCard = "<payment card>";

/// Parses a snapshot document (JSON text per docs/snapshot-schema.md).
/// Throws MalformedSnapshot on schema violations: missing or nonpositive
/// resolution, missing bounds, negative dimensions, duplicate ids.
ScreenSnapshot parse_snapshot(const std::string& json_text);

/// Removes UI noise: elements out of the screen bounds or with zero area,
/// elements fully covered by a later-drawn sibling subtree, and non-clickable
/// containers left with no text, no description and no children. Idempotent;
/// the root always survives (clamped to the screen rectangle).
ScreenSnapshot filter_noise(const ScreenSnapshot& s);

/// Best textual handle for an element: text, else content description, else
/// the humanized resource name (ic_/btn_/iv_ prefixes stripped, underscores
/// and camelCase split, lowercased), else the widget class name.
std::string derive_label(const UiElement& e);

/// Replaces phone numbers, emails, Luhn-valid card numbers and street
/// addresses in element text with standardized tags. The returned map
/// restores the original text exactly via restore_redactions().
std::pair<ScreenSnapshot, RedactionMap> anonymize(const ScreenSnapshot& s);

ScreenSnapshot restore_redactions(const ScreenSnapshot& s, const RedactionMap& map);

/// Full-content fingerprint: tokens combine widget class, derived label and
/// bounds quantized to an 8x8 screen grid.
ScreenFingerprint fingerprint(const ScreenSnapshot& s);

/// Text-blanked fingerprint used as graph node identity: tokens keep only the
/// widget class and quantized bounds, so dynamic-content screens unify.
ScreenFingerprint layout_signature(const ScreenSnapshot& s);

/// Bit distance between two fingerprints, in [0, 64].
int hamming(const ScreenFingerprint& a, const ScreenFingerprint& b);

/// Deterministic indented tree text, one line per element:
///   [id] class "label" (x,y,w,h) {ACTIONS}
std::string serialize_for_prompt(const ScreenSnapshot& s);

/// Grid cell (0..7) of a pixel coordinate on an axis of the given size.
int quantize_coord(int v, int axis_size);
QuantizedBounds quantize_bounds(const Rect& r, int width, int height);

/// Stable FNV-1a 64-bit hash used for fingerprint tokens.
std::uint64_t fnv1a64(const std::string& s);

/// Preorder walk helpers.
void for_each_element(const UiElement& root, const std::function<void(const UiElement&)>& fn);
const UiElement* find_element(const ScreenSnapshot& s, int id);
int count_elements(const ScreenSnapshot& s);

}  // namespace uitasker
