#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uitasker/lm_backend.hpp"
#include "uitasker/prompting.hpp"
#include "uitasker/types.hpp"
#include "uitasker/ui_model.hpp"

namespace uitasker {

struct ScreenDescription {
    std::string summary;
    std::string activity_name;
    std::string app_name;
    std::vector<std::string> clickable_labels;   // deduplicated, sorted
    std::vector<std::string> scrollable_labels;  // deduplicated, sorted
    std::vector<std::string> editable_labels;    // deduplicated, sorted

    bool operator==(const ScreenDescription&) const = default;

    std::string render() const;
};

/// Locally computed description: deterministic summary from the activity,
/// app name and prominent labels plus the interactive-element lists.
ScreenDescription heuristic_description(const ScreenSnapshot& s);

struct ScreenNode {
    int node_id = 0;
    ScreenFingerprint layout_signature;  // text-blanked; node identity
    ScreenDescription description;
    std::vector<std::string> served_commands;  // append-only, capped at 50
    std::vector<std::string> feedback_notes;

    bool operator==(const ScreenNode&) const = default;
};

struct TransitionEdge {
    int from = 0;
    int to = 0;
    Action action;
    TargetLocator target_locator;
    int traversal_count = 1;

    bool operator==(const TransitionEdge&) const = default;
};

/// Edge identity: payloads are parameters, not identity, so re-recording the
/// same gesture with new text bumps the count and refreshes the payload.
bool same_edge_key(const TransitionEdge& a, const TransitionEdge& b);

struct AppGraph {
    std::string package_name;
    std::map<int, ScreenNode> nodes;
    std::vector<TransitionEdge> edges;
    int next_node_id = 0;

    const ScreenNode* find_node(int id) const;
    ScreenNode* find_node(int id);
    bool empty() const { return nodes.empty(); }
};

bool graphs_equal(const AppGraph& a, const AppGraph& b);

/// Node for this snapshot's layout signature, created on first sight.
int ensure_node(AppGraph& g, const ScreenSnapshot& filtered);

/// Matching node when the layout is already known.
std::optional<int> match_node(const AppGraph& g, const ScreenSnapshot& filtered);

/// Records one traversal: nodes resolved or created by layout signature, the
/// edge upserted with its traversal count incremented. Dynamic-content
/// screens (same layout, different text) map to the same node.
void record_transition(AppGraph& g, const ScreenSnapshot& from_filtered,
                       const UiAction& action, const ScreenSnapshot& to_filtered);

/// Appends to a node's served-command history (most recent last, capped).
void append_served_command(AppGraph& g, int node_id, const std::string& command);

/// Current-screen lookup: exact layout-signature match short-circuits without
/// touching the backend; otherwise the backend ranks stored descriptions.
std::optional<int> locate_current(const AppGraph& g, const ScreenSnapshot& filtered,
                                  LmBackend& lm, const PromptTemplates& templates);

/// Destination lookup: a verbatim served-command match short-circuits;
/// otherwise the backend ranks nodes by served commands and descriptions.
std::optional<int> find_destination(const AppGraph& g, const std::string& command,
                                    LmBackend& lm, const PromptTemplates& templates);

/// Minimum-edge-count path by breadth-first search. Ties prefer the higher
/// summed traversal count, then the lexicographically smallest node-id
/// sequence. Throws UnknownNode / NoPath.
std::vector<TransitionEdge> shortest_path(const AppGraph& g, int from, int to,
                                          const std::vector<TransitionEdge>& excluded = {});

/// Adapts a saved action sequence to a new command via the backend's entity
/// substitution. Identical commands return the sequence unchanged without a
/// backend call. Throws SubstitutionRefused when no coherent mapping exists.
std::vector<UiAction> parameterize(const std::vector<UiAction>& path_actions,
                                   const std::string& saved_command,
                                   const std::string& new_command, LmBackend& lm,
                                   const PromptTemplates& templates);

/// Appends a natural-language note to a node; later injected into prompts.
void apply_feedback(AppGraph& g, int node_id, const std::string& feedback);

/// Rewrites one served-command entry; returns false when old_cmd is absent.
bool amend_command(AppGraph& g, int node_id, const std::string& old_cmd,
                   const std::string& new_cmd);

/// Line-delimited store file with a versioned header (docs/graph-store.md).
/// Writing is atomic (write-temp-then-rename).
void persist(const AppGraph& g, const std::string& path);
/// Missing files load as an empty graph; corrupted ones throw CorruptStore.
AppGraph load_graph(const std::string& path);

/// Per-app graph collection with optional directory-backed persistence.
class GraphStore {
public:
    GraphStore() = default;  // in-memory only
    explicit GraphStore(std::string dir);

    AppGraph& graph_for(const std::string& package_name);
    const std::map<std::string, AppGraph>& graphs() const { return graphs_; }

    void persist_all() const;
    std::string path_for(const std::string& package_name) const;

private:
    std::string dir_;
    std::map<std::string, AppGraph> graphs_;
};

}  // namespace uitasker
