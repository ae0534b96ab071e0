#include "uitasker/prompting.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uitasker/errors.hpp"

namespace uitasker {

namespace {

constexpr const char* kNoHistory = "No previous steps.";

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string history_action_phrase(const UiAction& a) {
    std::string out = format_action(a.action);
    if (a.target && !a.target->label.empty()) out += " " + a.target->label;
    return out;
}

std::string render_exemplar(const Exemplar& e, int index) {
    std::string out = "Example " + std::to_string(index) + ":\n";
    out += e.sample_prompt;
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += "THOUGHT: " + e.chain_of_thought + "\n";
    out += "RESULT: " + e.sample_response + "\n";
    return out;
}

std::string app_section(const AppInfo& app) {
    std::string out = "App: " + app.app_name + "\nPackage: " + app.package_name;
    if (!app.activity_names.empty()) {
        out += "\nActivities: ";
        for (size_t i = 0; i < app.activity_names.size(); ++i) {
            if (i) out += ", ";
            out += app.activity_names[i];
        }
    }
    return out;
}

std::string sys_section(const SysInfo& sys) {
    std::string out = "Resolution: " + std::to_string(sys.width) + "x" +
                      std::to_string(sys.height) + " (" + to_string(sys.orientation) + ")";
    if (!sys.installed_apps.empty()) {
        out += "\nInstalled apps: ";
        for (size_t i = 0; i < sys.installed_apps.size(); ++i) {
            if (i) out += ", ";
            out += sys.installed_apps[i];
        }
    }
    return out;
}

std::string task_section(const TaskContext& ctx) {
    return "Command: \"" + ctx.command + "\"\n" + render_task_history(ctx);
}

std::string failed_attempts_section(const TaskContext& ctx) {
    std::string out;
    for (const auto& [page, action] : ctx.failed_attempts) {
        if (!out.empty()) out += '\n';
        out += "- on " + page + ": " + format_ui_action(action) + " had no effect";
    }
    return out;
}

std::string feedback_section(const TaskContext& ctx) {
    std::string out;
    for (const auto& note : ctx.feedback_notes) {
        if (!out.empty()) out += '\n';
        out += "- " + note;
    }
    return out;
}

// Fits exemplars into whatever budget the mandatory sections leave over.
void finalize_prompt(Prompt& p, const std::vector<Exemplar>& pool, int budget) {
    p.exemplars.clear();
    int mandatory = estimate_tokens(p.render());
    if (mandatory > budget)
        throw BudgetExceeded("mandatory prompt sections need " + std::to_string(mandatory) +
                             " tokens, budget is " + std::to_string(budget));
    p.exemplars = select_exemplars(pool, budget - mandatory);
}

}  // namespace

std::string to_string(PromptKind k) {
    switch (k) {
        case PromptKind::Action: return "action";
        case PromptKind::Target: return "target";
        case PromptKind::Description: return "description";
        case PromptKind::Rank: return "rank";
        case PromptKind::Substitution: return "substitution";
    }
    return "action";
}

std::optional<PromptKind> prompt_kind_from_string(const std::string& name) {
    if (name == "action") return PromptKind::Action;
    if (name == "target") return PromptKind::Target;
    if (name == "description") return PromptKind::Description;
    if (name == "rank") return PromptKind::Rank;
    if (name == "substitution") return PromptKind::Substitution;
    return std::nullopt;
}

std::string to_string(SectionName s) {
    switch (s) {
        case SectionName::App: return "APP";
        case SectionName::System: return "SYSTEM";
        case SectionName::Ui: return "UI";
        case SectionName::Task: return "TASK";
        case SectionName::Feedback: return "FEEDBACK";
        case SectionName::FailedAttempts: return "FAILED_ATTEMPTS";
    }
    return "UI";
}

std::string Prompt::render() const {
    std::string out = task_preamble;
    for (const auto& [name, text] : knowledge_sections) {
        out += "\n\n=== " + to_string(name) + " ===\n" + text;
    }
    for (size_t i = 0; i < exemplars.size(); ++i) {
        out += "\n\n" + render_exemplar(exemplars[i], static_cast<int>(i) + 1);
    }
    out += "\n\n=== QUERY ===\n" + query;
    return out;
}

std::string render_task_history(const TaskContext& ctx) {
    if (ctx.steps.empty()) return kNoHistory;
    std::string out;
    for (size_t i = 0; i < ctx.steps.size(); ++i) {
        const auto& [page, action] = ctx.steps[i];
        std::string landing;
        if (i + 1 < ctx.steps.size()) {
            landing = ctx.steps[i + 1].first;
        } else if (ctx.visited_pages.size() > ctx.steps.size()) {
            landing = ctx.visited_pages.back();
        } else {
            landing = "the current screen";
        }
        if (i == 0) {
            out += "Started from " + page + ", we " + history_action_phrase(action) +
                   " to get to " + landing + ".";
        } else {
            out += " After that, we " + history_action_phrase(action) + " to get to " +
                   landing + ".";
        }
    }
    return out;
}

int estimate_tokens(const std::string& text) {
    return static_cast<int>((text.size() + 3) / 4);
}

int exemplar_token_cost(const Exemplar& e) {
    return estimate_tokens(render_exemplar(e, 1)) + 2;  // separator overhead
}

std::vector<Exemplar> select_exemplars(const std::vector<Exemplar>& pool,
                                       int budget_remaining) {
    std::vector<Exemplar> out;
    int used = 0;
    for (const auto& e : pool) {
        int cost = exemplar_token_cost(e);
        if (used + cost > budget_remaining) break;
        used += cost;
        out.push_back(e);
    }
    return out;
}

// --- builders ---------------------------------------------------------------

Prompt build_action_prompt(const TaskContext& ctx, const ScreenSnapshot& snapshot,
                           const AppInfo& app, const SysInfo& sys,
                           const PromptTemplates& templates) {
    Prompt p;
    p.kind = PromptKind::Action;
    p.task_preamble = templates.preamble(PromptKind::Action);
    p.knowledge_sections.emplace_back(SectionName::App, app_section(app));
    p.knowledge_sections.emplace_back(SectionName::System, sys_section(sys));
    p.knowledge_sections.emplace_back(SectionName::Ui, serialize_for_prompt(snapshot));
    p.knowledge_sections.emplace_back(SectionName::Task, task_section(ctx));
    if (!ctx.feedback_notes.empty())
        p.knowledge_sections.emplace_back(SectionName::Feedback, feedback_section(ctx));
    if (!ctx.failed_attempts.empty())
        p.knowledge_sections.emplace_back(SectionName::FailedAttempts,
                                          failed_attempts_section(ctx));
    p.query = replace_all(templates.query_template(PromptKind::Action), "{{command}}",
                          ctx.command);
    finalize_prompt(p, templates.exemplars(PromptKind::Action), templates.token_budget);
    return p;
}

Prompt build_target_prompt(const TaskContext& ctx, const ScreenSnapshot& snapshot,
                           const Action& action, const PromptTemplates& templates) {
    CapabilityMask needed = required_capability(action.kind);
    if (needed == 0)
        throw InvalidArgument("action " + to_string(action.kind) + " takes no target");

    // The candidate list is the guardrail: only elements supporting the
    // action are shown to the backend.
    std::vector<std::string> lines;
    for_each_element(snapshot.root, [&](const UiElement& e) {
        if ((e.allowed_actions & needed) == 0) return;
        std::ostringstream line;
        line << "[" << e.id << "] " << to_string(e.widget_class) << " \""
             << derive_label(e) << "\" (" << e.bounds.x << ',' << e.bounds.y << ','
             << e.bounds.w << ',' << e.bounds.h << ")";
        lines.push_back(line.str());
    });
    if (lines.empty())
        throw NoCandidates("no element supports " + to_string(action.kind));

    std::string candidates;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i) candidates += '\n';
        candidates += lines[i];
    }

    Prompt p;
    p.kind = PromptKind::Target;
    p.task_preamble = templates.preamble(PromptKind::Target);
    p.knowledge_sections.emplace_back(SectionName::Ui, candidates);
    p.knowledge_sections.emplace_back(SectionName::Task, task_section(ctx));
    if (!ctx.failed_attempts.empty())
        p.knowledge_sections.emplace_back(SectionName::FailedAttempts,
                                          failed_attempts_section(ctx));
    std::string q = templates.query_template(PromptKind::Target);
    q = replace_all(q, "{{command}}", ctx.command);
    q = replace_all(q, "{{action}}", format_action(action));
    p.query = q;
    finalize_prompt(p, templates.exemplars(PromptKind::Target), templates.token_budget);
    return p;
}

Prompt build_description_prompt(const ScreenSnapshot& snapshot,
                                const PromptTemplates& templates) {
    Prompt p;
    p.kind = PromptKind::Description;
    p.task_preamble = templates.preamble(PromptKind::Description);
    p.knowledge_sections.emplace_back(
        SectionName::App, "App: " + snapshot.app_name + "\nActivity: " + snapshot.activity_name);
    p.knowledge_sections.emplace_back(SectionName::Ui, serialize_for_prompt(snapshot));
    p.query = templates.query_template(PromptKind::Description);
    finalize_prompt(p, templates.exemplars(PromptKind::Description), templates.token_budget);
    return p;
}

Prompt build_rank_prompt(const std::string& command,
                         const std::vector<RankCandidate>& screens,
                         const PromptTemplates& templates) {
    std::string listing;
    for (const auto& s : screens) {
        if (!listing.empty()) listing += '\n';
        listing += "ID " + std::to_string(s.node_id) + ": " + s.description;
        if (!s.served_commands.empty()) {
            listing += " | served commands: ";
            for (size_t i = 0; i < s.served_commands.size(); ++i) {
                if (i) listing += "; ";
                listing += "\"" + s.served_commands[i] + "\"";
            }
        }
    }

    Prompt p;
    p.kind = PromptKind::Rank;
    p.task_preamble = templates.preamble(PromptKind::Rank);
    p.knowledge_sections.emplace_back(SectionName::Ui, listing);
    p.query = replace_all(templates.query_template(PromptKind::Rank), "{{command}}", command);
    finalize_prompt(p, templates.exemplars(PromptKind::Rank), templates.token_budget);
    return p;
}

Prompt build_substitution_prompt(const std::string& saved_command,
                                 const std::string& new_command,
                                 const std::vector<UiAction>& action_sequence,
                                 const PromptTemplates& templates) {
    std::string listing;
    for (size_t i = 0; i < action_sequence.size(); ++i) {
        if (i) listing += '\n';
        listing += std::to_string(i + 1) + ". " + format_ui_action(action_sequence[i]);
    }

    Prompt p;
    p.kind = PromptKind::Substitution;
    p.task_preamble = templates.preamble(PromptKind::Substitution);
    p.knowledge_sections.emplace_back(SectionName::Task,
                                      "Saved command: \"" + saved_command + "\"\n" +
                                          "New command: \"" + new_command + "\"\n" +
                                          "Saved action sequence:\n" + listing);
    p.query = templates.query_template(PromptKind::Substitution);
    finalize_prompt(p, templates.exemplars(PromptKind::Substitution), templates.token_budget);
    return p;
}

// --- templates ---------------------------------------------------------------

namespace {

const char* kActionPreamble =
    "You are a smartphone assistant that turns a natural-language command into "
    "one device action at a time.";
const char* kActionQuery =
    "Choose exactly one next action for the command \"{{command}}\".\n"
    "Allowed actions: PRESS, ENTER_TEXT '<text>', SCROLL <UP|DOWN|LEFT|RIGHT>, "
    "SWIPE <UP|DOWN|LEFT|RIGHT>, OPEN '<app name>', BACK, DONE.\n"
    "Do not repeat any action listed under FAILED_ATTEMPTS.\n"
    "Answer with two lines:\nTHOUGHT: <your reasoning>\nRESULT: <one action>";

const char* kTargetPreamble =
    "You are a smartphone assistant that picks the target UI element for an "
    "already chosen action. Pick only from the listed candidates.";
const char* kTargetQuery =
    "The chosen action is {{action}} for the command \"{{command}}\".\n"
    "Which candidate element should it apply to?\n"
    "Answer with two lines:\nTHOUGHT: <your reasoning>\nRESULT: [<id>] '<label>' (x,y,w,h)";

const char* kDescriptionPreamble =
    "You summarize smartphone screens into short functional descriptions.";
const char* kDescriptionQuery =
    "Describe in one short paragraph what this screen is for, then list its "
    "clickable, scrollable and text-editable element labels.\n"
    "Answer with two lines:\nTHOUGHT: <your reasoning>\nRESULT: <description>";

const char* kRankPreamble =
    "You match user requests against saved app screens.";
const char* kRankQuery =
    "Which screen best serves: \"{{command}}\"?\n"
    "Answer with two lines:\nTHOUGHT: <your reasoning>\nRESULT: <screen id or NONE>";

const char* kSubstitutionPreamble =
    "You adapt saved action sequences to new commands by swapping substitutable "
    "entities, acting as a named-entity recognizer.";
const char* kSubstitutionQuery =
    "Rewrite the saved action sequence so it serves the new command, replacing "
    "substitutable words. If nothing must change answer UNCHANGED; if no coherent "
    "mapping exists answer REFUSED.\n"
    "Answer with THOUGHT: then RESULT: followed by UNCHANGED, REFUSED, or the "
    "rewritten actions one per line.";

Exemplar youtube_action_exemplar() {
    return Exemplar{
        "Command: \"Show my video history\" on the YouTube home screen with a "
        "bottom bar listing Home, Shorts, Subscriptions and Library.",
        "The video history lives in the Library section, so the next step is a "
        "press on the Library button.",
        "PRESS"};
}

Exemplar youtube_target_exemplar() {
    return Exemplar{
        "The chosen action is PRESS for the command \"Show my video history\". "
        "Candidates:\n[2] button \"Home\" (0,1780,270,140)\n[3] button \"Subscriptions\" "
        "(270,1780,270,140)\n[4] button \"Library\" (810,1780,270,140)",
        "The Library button should be pressed to find the video history in YouTube.",
        "[4] 'Library' (810,1780,270,140)"};
}

Exemplar description_exemplar() {
    return Exemplar{
        "App: YouTube, Activity: HomeActivity, elements: a search icon, a video "
        "list and a bottom navigation bar.",
        "The screen shows a feed of videos with navigation shortcuts, so it is "
        "the app's home feed.",
        "Home feed for browsing and searching videos. clickable: search, Home, "
        "Library; scrollable: video feed; editable: none"};
}

Exemplar rank_exemplar() {
    return Exemplar{
        "Request: \"I want to order some spaghetti\". Screens: ID 1: restaurant "
        "home | ID 4: search results for food | served commands: \"I want to "
        "order some sushi\"",
        "Ordering spaghetti is the same flow as the saved sushi order, which "
        "concluded on the search results screen.",
        "4"};
}

Exemplar substitution_exemplar() {
    return Exemplar{
        "Saved command: \"I want to order some sushi\"; new command: \"I want to "
        "order some spaghetti\"; saved actions:\n1. PRESS on [res=ic_search]\n2. "
        "ENTER_TEXT 'sushi' on [res=search_input]\n3. PRESS on [res=btn_search]",
        "Only the food entity differs, so sushi is replaced with spaghetti in "
        "the typed text.",
        "PRESS\nENTER_TEXT 'spaghetti'\nPRESS"};
}

}  // namespace

PromptTemplates PromptTemplates::builtin() {
    PromptTemplates t;
    t.entries_[PromptKind::Action] =
        Entry{kActionPreamble, kActionQuery, {youtube_action_exemplar()}};
    t.entries_[PromptKind::Target] =
        Entry{kTargetPreamble, kTargetQuery, {youtube_target_exemplar()}};
    t.entries_[PromptKind::Description] =
        Entry{kDescriptionPreamble, kDescriptionQuery, {description_exemplar()}};
    t.entries_[PromptKind::Rank] = Entry{kRankPreamble, kRankQuery, {rank_exemplar()}};
    t.entries_[PromptKind::Substitution] =
        Entry{kSubstitutionPreamble, kSubstitutionQuery, {substitution_exemplar()}};
    return t;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
    PromptTemplates t = builtin();
    for (auto kind : {PromptKind::Action, PromptKind::Target, PromptKind::Description,
                      PromptKind::Rank, PromptKind::Substitution}) {
        std::filesystem::path path = std::filesystem::path(dir) / (to_string(kind) + ".txt");
        if (!std::filesystem::exists(path)) continue;
        std::ifstream in(path);
        if (!in) throw IoError("cannot open template file " + path.string());

        Entry entry;
        std::vector<Exemplar> exemplars;
        std::string section;
        std::string buffer;
        int line_no = 0;
        auto flush = [&]() {
            // Trim one trailing newline left by line accumulation.
            if (!buffer.empty() && buffer.back() == '\n') buffer.pop_back();
            if (section == "preamble") entry.preamble = buffer;
            else if (section == "query") entry.query = buffer;
            else if (section == "exemplar.prompt") exemplars.push_back(Exemplar{buffer, "", ""});
            else if (section == "exemplar.thought") {
                if (exemplars.empty())
                    throw SpecError(path.string() + ": exemplar.thought before exemplar.prompt");
                exemplars.back().chain_of_thought = buffer;
            } else if (section == "exemplar.response") {
                if (exemplars.empty())
                    throw SpecError(path.string() + ": exemplar.response before exemplar.prompt");
                exemplars.back().sample_response = buffer;
            } else if (!section.empty()) {
                throw SpecError(path.string() + ": unknown section @" + section);
            }
            buffer.clear();
        };

        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line[0] == '@') {
                flush();
                section = line.substr(1);
                continue;
            }
            if (section.empty()) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                throw SpecError(path.string() + ":" + std::to_string(line_no) +
                                ": text before the first @section header");
            }
            buffer += line;
            buffer += '\n';
        }
        flush();

        for (const auto& e : exemplars) {
            if (e.chain_of_thought.empty())
                throw SpecError(path.string() + ": exemplar without a chain of thought");
        }
        if (entry.preamble.empty()) entry.preamble = t.entries_[kind].preamble;
        if (entry.query.empty()) entry.query = t.entries_[kind].query;
        if (!exemplars.empty()) entry.exemplars = std::move(exemplars);
        else entry.exemplars = t.entries_[kind].exemplars;
        t.entries_[kind] = std::move(entry);
    }
    return t;
}

const std::string& PromptTemplates::preamble(PromptKind k) const {
    return entries_.at(k).preamble;
}

const std::string& PromptTemplates::query_template(PromptKind k) const {
    return entries_.at(k).query;
}

const std::vector<Exemplar>& PromptTemplates::exemplars(PromptKind k) const {
    return entries_.at(k).exemplars;
}

}  // namespace uitasker
