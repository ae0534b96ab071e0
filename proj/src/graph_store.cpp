#include "uitasker/graph_store.hpp"

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uitasker/errors.hpp"

namespace uitasker {

namespace {

using nlohmann::json;

constexpr const char* kStoreHeader = "uitasker-graph v1";
constexpr size_t kServedCommandCap = 50;

std::string join(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::vector<std::string> sorted_unique(std::vector<std::string> items) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    return items;
}

// Canonical edge ordering key, used for deterministic tie-breaking.
std::string edge_sort_key(const TransitionEdge& e) {
    return format_action(Action{e.action.kind, "", e.action.direction}) + "|" +
           to_string(e.target_locator);
}

RankCandidate candidate_for(const ScreenNode& node) {
    RankCandidate c;
    c.node_id = node.node_id;
    c.description = node.description.render();
    c.served_commands = node.served_commands;
    return c;
}

json action_to_json(const Action& a) {
    json out;
    out["kind"] = to_string(a.kind);
    if (!a.payload.empty()) out["payload"] = a.payload;
    if (a.direction != Direction::None) out["direction"] = to_string(a.direction);
    return out;
}

Action action_from_json(const json& j) {
    Action a;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "PRESS") a.kind = ActionKind::Press;
    else if (kind == "ENTER_TEXT") a.kind = ActionKind::EnterText;
    else if (kind == "SCROLL") a.kind = ActionKind::Scroll;
    else if (kind == "SWIPE") a.kind = ActionKind::Swipe;
    else if (kind == "OPEN") a.kind = ActionKind::Open;
    else if (kind == "BACK") a.kind = ActionKind::Back;
    else if (kind == "DONE") a.kind = ActionKind::Done;
    else throw CorruptStore("unknown action kind '" + kind + "'");
    a.payload = j.value("payload", "");
    if (j.contains("direction")) {
        std::string d = j.at("direction").get<std::string>();
        if (d == "UP") a.direction = Direction::Up;
        else if (d == "DOWN") a.direction = Direction::Down;
        else if (d == "LEFT") a.direction = Direction::Left;
        else if (d == "RIGHT") a.direction = Direction::Right;
        else throw CorruptStore("unknown direction '" + d + "'");
    }
    return a;
}

json locator_to_json(const TargetLocator& loc) {
    json out;
    if (!loc.resource_name.empty()) out["res"] = loc.resource_name;
    if (!loc.label.empty()) out["label"] = loc.label;
    if (loc.bounds)
        out["grid"] = {loc.bounds->x1, loc.bounds->y1, loc.bounds->x2, loc.bounds->y2};
    return out;
}

TargetLocator locator_from_json(const json& j) {
    TargetLocator loc;
    loc.resource_name = j.value("res", "");
    loc.label = j.value("label", "");
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        loc.bounds = QuantizedBounds{g[0].get<int>(), g[1].get<int>(), g[2].get<int>(),
                                     g[3].get<int>()};
    }
    return loc;
}

}  // namespace

std::string ScreenDescription::render() const {
    std::string out = summary;
    if (!clickable_labels.empty()) out += " | clickable: " + join(clickable_labels, ", ");
    if (!scrollable_labels.empty()) out += " | scrollable: " + join(scrollable_labels, ", ");
    if (!editable_labels.empty()) out += " | editable: " + join(editable_labels, ", ");
    return out;
}

ScreenDescription heuristic_description(const ScreenSnapshot& s) {
    ScreenDescription d;
    d.activity_name = s.activity_name;
    d.app_name = s.app_name;

    std::vector<std::string> prominent;
    std::vector<std::string> clickable;
    std::vector<std::string> scrollable;
    std::vector<std::string> editable;
    for_each_element(s.root, [&](const UiElement& e) {
        std::string label = derive_label(e);
        if (e.allowed_actions & caps::kClickable) clickable.push_back(label);
        if (e.allowed_actions & caps::kScrollable) scrollable.push_back(label);
        if (e.allowed_actions & caps::kTextEditable) editable.push_back(label);
        if (prominent.size() < 6 && e.children.empty() &&
            e.widget_class != WidgetClass::Container)
            prominent.push_back(label);
    });
    d.clickable_labels = sorted_unique(std::move(clickable));
    d.scrollable_labels = sorted_unique(std::move(scrollable));
    d.editable_labels = sorted_unique(std::move(editable));
    d.summary = "Screen '" + s.activity_name + "' of " + s.app_name + " showing " +
                join(prominent, ", ") + ".";
    return d;
}

bool same_edge_key(const TransitionEdge& a, const TransitionEdge& b) {
    return a.from == b.from && a.to == b.to && a.action.kind == b.action.kind &&
           a.action.direction == b.action.direction && a.target_locator == b.target_locator;
}

const ScreenNode* AppGraph::find_node(int id) const {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
}

ScreenNode* AppGraph::find_node(int id) {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
}

bool graphs_equal(const AppGraph& a, const AppGraph& b) {
    return a.package_name == b.package_name && a.nodes == b.nodes && a.edges == b.edges;
}

std::optional<int> match_node(const AppGraph& g, const ScreenSnapshot& filtered) {
    ScreenFingerprint sig = layout_signature(filtered);
    for (const auto& [id, node] : g.nodes)
        if (node.layout_signature == sig) return id;
    return std::nullopt;
}

int ensure_node(AppGraph& g, const ScreenSnapshot& filtered) {
    if (auto existing = match_node(g, filtered)) return *existing;
    ScreenNode node;
    node.node_id = g.next_node_id++;
    node.layout_signature = layout_signature(filtered);
    node.description = heuristic_description(filtered);
    g.nodes[node.node_id] = std::move(node);
    return g.next_node_id - 1;
}

void record_transition(AppGraph& g, const ScreenSnapshot& from_filtered,
                       const UiAction& action, const ScreenSnapshot& to_filtered) {
    int from = ensure_node(g, from_filtered);
    int to = ensure_node(g, to_filtered);
    TransitionEdge edge;
    edge.from = from;
    edge.to = to;
    edge.action = action.action;
    if (action.target) edge.target_locator = *action.target;
    for (auto& existing : g.edges) {
        if (same_edge_key(existing, edge)) {
            ++existing.traversal_count;
            existing.action.payload = edge.action.payload;  // keep the latest parameters
            return;
        }
    }
    g.edges.push_back(std::move(edge));
}

void append_served_command(AppGraph& g, int node_id, const std::string& command) {
    ScreenNode* node = g.find_node(node_id);
    if (!node) throw UnknownNode("node " + std::to_string(node_id) + " is not in the graph");
    node->served_commands.push_back(command);
    if (node->served_commands.size() > kServedCommandCap) {
        node->served_commands.erase(
            node->served_commands.begin(),
            node->served_commands.end() - static_cast<long>(kServedCommandCap));
    }
}

std::optional<int> locate_current(const AppGraph& g, const ScreenSnapshot& filtered,
                                  LmBackend& lm, const PromptTemplates& templates) {
    if (auto exact = match_node(g, filtered)) return exact;
    if (g.empty()) return std::nullopt;

    std::vector<RankCandidate> screens;
    for (const auto& [id, node] : g.nodes) screens.push_back(candidate_for(node));
    std::string query =
        "the screen described as: " + heuristic_description(filtered).render();
    Prompt prompt = build_rank_prompt(query, screens, templates);
    std::optional<int> picked = parse_rank_response(lm.complete(prompt));
    if (picked && !g.find_node(*picked)) return std::nullopt;
    return picked;
}

std::optional<int> find_destination(const AppGraph& g, const std::string& command,
                                    LmBackend& lm, const PromptTemplates& templates) {
    for (const auto& [id, node] : g.nodes) {
        if (std::find(node.served_commands.begin(), node.served_commands.end(), command) !=
            node.served_commands.end())
            return id;
    }
    if (g.empty()) return std::nullopt;

    std::vector<RankCandidate> screens;
    for (const auto& [id, node] : g.nodes) screens.push_back(candidate_for(node));
    Prompt prompt = build_rank_prompt(command, screens, templates);
    std::optional<int> picked = parse_rank_response(lm.complete(prompt));
    if (picked && !g.find_node(*picked)) return std::nullopt;
    return picked;
}

std::vector<TransitionEdge> shortest_path(const AppGraph& g, int from, int to,
                                          const std::vector<TransitionEdge>& excluded) {
    if (!g.find_node(from))
        throw UnknownNode("path source node " + std::to_string(from) + " is unknown");
    if (!g.find_node(to))
        throw UnknownNode("path destination node " + std::to_string(to) + " is unknown");
    if (from == to) return {};

    auto is_excluded = [&](const TransitionEdge& e) {
        for (const auto& x : excluded)
            if (same_edge_key(x, e)) return true;
        return false;
    };

    // Adjacency with deterministic edge order.
    std::map<int, std::vector<const TransitionEdge*>> out_edges;
    for (const auto& e : g.edges) {
        if (is_excluded(e)) continue;
        out_edges[e.from].push_back(&e);
    }
    for (auto& [id, edges] : out_edges) {
        std::sort(edges.begin(), edges.end(),
                  [](const TransitionEdge* a, const TransitionEdge* b) {
                      if (a->to != b->to) return a->to < b->to;
                      if (a->traversal_count != b->traversal_count)
                          return a->traversal_count > b->traversal_count;
                      return edge_sort_key(*a) < edge_sort_key(*b);
                  });
    }

    // Layered BFS distances.
    std::map<int, int> dist;
    dist[from] = 0;
    std::deque<int> queue{from};
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        auto it = out_edges.find(u);
        if (it == out_edges.end()) continue;
        for (const TransitionEdge* e : it->second) {
            if (!dist.count(e->to)) {
                dist[e->to] = dist[u] + 1;
                queue.push_back(e->to);
            }
        }
    }
    if (!dist.count(to)) throw NoPath("no path from node " + std::to_string(from) +
                                      " to node " + std::to_string(to));

    // Best path per node among minimum-length paths: maximise summed
    // traversal count, then take the smallest node-id sequence.
    struct Best {
        long long count_sum = -1;
        std::vector<int> node_seq;
        std::vector<const TransitionEdge*> edges;
    };
    std::map<int, Best> best;
    best[from] = Best{0, {from}, {}};

    // Nodes grouped by BFS layer, processed in ascending order.
    std::map<int, std::vector<int>> layers;
    for (const auto& [node, d] : dist) layers[d].push_back(node);
    int target_layer = dist[to];
    for (int layer = 0; layer < target_layer; ++layer) {
        for (int u : layers[layer]) {
            auto bu = best.find(u);
            if (bu == best.end()) continue;
            auto it = out_edges.find(u);
            if (it == out_edges.end()) continue;
            for (const TransitionEdge* e : it->second) {
                if (dist[e->to] != layer + 1) continue;
                Best candidate;
                candidate.count_sum = bu->second.count_sum + e->traversal_count;
                candidate.node_seq = bu->second.node_seq;
                candidate.node_seq.push_back(e->to);
                candidate.edges = bu->second.edges;
                candidate.edges.push_back(e);
                auto bv = best.find(e->to);
                bool better = false;
                if (bv == best.end()) {
                    better = true;
                } else if (candidate.count_sum != bv->second.count_sum) {
                    better = candidate.count_sum > bv->second.count_sum;
                } else {
                    better = candidate.node_seq < bv->second.node_seq;
                }
                if (better) best[e->to] = std::move(candidate);
            }
        }
    }

    std::vector<TransitionEdge> path;
    for (const TransitionEdge* e : best.at(to).edges) path.push_back(*e);
    return path;
}

std::vector<UiAction> parameterize(const std::vector<UiAction>& path_actions,
                                   const std::string& saved_command,
                                   const std::string& new_command, LmBackend& lm,
                                   const PromptTemplates& templates) {
    if (saved_command == new_command) return path_actions;
    Prompt prompt =
        build_substitution_prompt(saved_command, new_command, path_actions, templates);
    LmResponse response = lm.complete(prompt);
    return parse_substitution_response(response, path_actions);
}

void apply_feedback(AppGraph& g, int node_id, const std::string& feedback) {
    ScreenNode* node = g.find_node(node_id);
    if (!node) throw UnknownNode("node " + std::to_string(node_id) + " is not in the graph");
    node->feedback_notes.push_back(feedback);
}

bool amend_command(AppGraph& g, int node_id, const std::string& old_cmd,
                   const std::string& new_cmd) {
    ScreenNode* node = g.find_node(node_id);
    if (!node) throw UnknownNode("node " + std::to_string(node_id) + " is not in the graph");
    for (auto& cmd : node->served_commands) {
        if (cmd == old_cmd) {
            cmd = new_cmd;
            return true;
        }
    }
    return false;
}

// --- persistence ---------------------------------------------------------------

void persist(const AppGraph& g, const std::string& path) {
    std::ostringstream out;
    out << kStoreHeader << ' ' << g.package_name << '\n';
    for (const auto& [id, node] : g.nodes) {
        json j;
        j["id"] = node.node_id;
        j["sig"] = {{"bits", node.layout_signature.bits},
                    {"n", node.layout_signature.element_count}};
        j["desc"] = {{"summary", node.description.summary},
                     {"activity", node.description.activity_name},
                     {"app", node.description.app_name},
                     {"clickable", node.description.clickable_labels},
                     {"scrollable", node.description.scrollable_labels},
                     {"editable", node.description.editable_labels}};
        j["served"] = node.served_commands;
        j["notes"] = node.feedback_notes;
        out << "node " << j.dump() << '\n';
    }
    for (const auto& e : g.edges) {
        json j;
        j["from"] = e.from;
        j["to"] = e.to;
        j["action"] = action_to_json(e.action);
        j["locator"] = locator_to_json(e.target_locator);
        j["count"] = e.traversal_count;
        out << "edge " << j.dump() << '\n';
    }

    std::filesystem::path target(path);
    if (target.has_parent_path())
        std::filesystem::create_directories(target.parent_path());
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream file(tmp, std::ios::trunc);
        if (!file) throw IoError("cannot write graph store " + path);
        file << out.str();
    }
    std::filesystem::rename(tmp, target);
}

AppGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) return AppGraph{};  // missing store: defined empty default

    AppGraph g;
    std::string line;
    if (!std::getline(in, line))
        throw CorruptStore(path + ": empty store file");
    if (line.rfind(kStoreHeader, 0) != 0)
        throw CorruptStore(path + ": bad header '" + line + "'");
    if (line.size() > std::string(kStoreHeader).size() + 1)
        g.package_name = line.substr(std::string(kStoreHeader).size() + 1);

    int line_no = 1;
    int max_id = -1;
    try {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (line.rfind("node ", 0) == 0) {
                json j = json::parse(line.substr(5));
                ScreenNode node;
                node.node_id = j.at("id").get<int>();
                node.layout_signature.bits = j.at("sig").at("bits").get<std::uint64_t>();
                node.layout_signature.element_count = j.at("sig").at("n").get<int>();
                const auto& d = j.at("desc");
                node.description.summary = d.value("summary", "");
                node.description.activity_name = d.value("activity", "");
                node.description.app_name = d.value("app", "");
                node.description.clickable_labels =
                    d.value("clickable", std::vector<std::string>{});
                node.description.scrollable_labels =
                    d.value("scrollable", std::vector<std::string>{});
                node.description.editable_labels =
                    d.value("editable", std::vector<std::string>{});
                node.served_commands = j.value("served", std::vector<std::string>{});
                node.feedback_notes = j.value("notes", std::vector<std::string>{});
                max_id = std::max(max_id, node.node_id);
                g.nodes[node.node_id] = std::move(node);
            } else if (line.rfind("edge ", 0) == 0) {
                json j = json::parse(line.substr(5));
                TransitionEdge e;
                e.from = j.at("from").get<int>();
                e.to = j.at("to").get<int>();
                e.action = action_from_json(j.at("action"));
                e.target_locator = locator_from_json(j.value("locator", json::object()));
                e.traversal_count = j.value("count", 1);
                if (!g.nodes.count(e.from) || !g.nodes.count(e.to))
                    throw CorruptStore(path + ":" + std::to_string(line_no) +
                                       ": edge references a missing node");
                g.edges.push_back(std::move(e));
            } else {
                throw CorruptStore(path + ":" + std::to_string(line_no) +
                                   ": unknown record type");
            }
        }
    } catch (const json::exception& e) {
        throw CorruptStore(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    g.next_node_id = max_id + 1;
    return g;
}

GraphStore::GraphStore(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::string GraphStore::path_for(const std::string& package_name) const {
    return (std::filesystem::path(dir_) / (package_name + ".graph")).string();
}

AppGraph& GraphStore::graph_for(const std::string& package_name) {
    auto it = graphs_.find(package_name);
    if (it != graphs_.end()) return it->second;
    AppGraph g;
    if (!dir_.empty()) g = load_graph(path_for(package_name));
    g.package_name = package_name;
    return graphs_.emplace(package_name, std::move(g)).first->second;
}

void GraphStore::persist_all() const {
    if (dir_.empty()) return;
    for (const auto& [pkg, g] : graphs_) persist(g, path_for(pkg));
}

}  // namespace uitasker
