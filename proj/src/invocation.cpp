#include "capita/invocation.hpp"

namespace capita {

std::string to_string(ManipCategory c) {
    switch (c) {
        case ManipCategory::Grasp: return "grasp";
        case ManipCategory::Put: return "put";
        case ManipCategory::TurnOn: return "turn-on";
        case ManipCategory::Slice: return "slice";
        case ManipCategory::HeatWith: return "heat-with";
        case ManipCategory::CoolWith: return "cool-with";
        case ManipCategory::CleanWith: return "clean-with";
        case ManipCategory::PutAndGrasp: return "put-and-grasp";
    }
    return {};
}

int arity(ManipCategory c) {
    switch (c) {
        case ManipCategory::Grasp:
        case ManipCategory::TurnOn:
        case ManipCategory::Slice: return 1;
        default: return 2;
    }
}

std::string render(const ManipCommand& c) {
    auto a = [&](std::size_t i) { return i < c.args.size() ? display_name(c.args[i]) : std::string("?"); };
    switch (c.category) {
        case ManipCategory::Grasp: return "grasp " + a(0);
        case ManipCategory::Put: return "put " + a(0) + " to " + a(1);
        case ManipCategory::TurnOn: return "turn on " + a(0);
        case ManipCategory::Slice: return "slice " + a(0);
        case ManipCategory::HeatWith: return "heat " + a(0) + " with " + a(1);
        case ManipCategory::CoolWith: return "cool " + a(0) + " with " + a(1);
        case ManipCategory::CleanWith: return "clean " + a(0) + " with " + a(1);
        case ManipCategory::PutAndGrasp: return "put " + a(0) + " to " + a(1) + " and grasp " + a(1);
    }
    return {};
}

namespace {

std::optional<std::string> one_class(std::string_view phrase, const Lexicon& lex) {
    auto classes = lex.canonicalize(phrase);
    if (classes.size() != 1) return std::nullopt;
    return classes.front();
}

std::optional<ManipCommand> unary(ManipCategory cat, std::string_view rest, const Lexicon& lex) {
    auto c = one_class(rest, lex);
    if (!c) return std::nullopt;
    return ManipCommand{cat, {*c}};
}

std::optional<ManipCommand> binary(ManipCategory cat, std::string_view rest, std::string_view sep, const Lexicon& lex) {
    auto pos = rest.find(sep);
    if (pos == std::string_view::npos) return std::nullopt;
    auto a = one_class(rest.substr(0, pos), lex);
    auto b = one_class(rest.substr(pos + sep.size()), lex);
    if (!a || !b) return std::nullopt;
    return ManipCommand{cat, {*a, *b}};
}

}  // namespace

std::optional<ManipCommand> parse_command(std::string_view text, const Lexicon& lex) {
    std::string t = to_lower(trim(text));
    std::string_view s(t);
    struct Verb {
        std::string_view prefix;
        ManipCategory cat;
    };
    static const Verb tool_verbs[] = {{"heat ", ManipCategory::HeatWith},  {"warm ", ManipCategory::HeatWith},
                                      {"cool ", ManipCategory::CoolWith},  {"chill ", ManipCategory::CoolWith},
                                      {"clean ", ManipCategory::CleanWith}, {"rinse ", ManipCategory::CleanWith}};
    for (const auto& v : tool_verbs)
        if (starts_with(s, v.prefix)) return binary(v.cat, s.substr(v.prefix.size()), " with ", lex);
    static const Verb unary_verbs[] = {{"grasp ", ManipCategory::Grasp},     {"pick up ", ManipCategory::Grasp},
                                       {"take ", ManipCategory::Grasp},      {"turn on ", ManipCategory::TurnOn},
                                       {"switch on ", ManipCategory::TurnOn}, {"slice ", ManipCategory::Slice},
                                       {"cut ", ManipCategory::Slice}};
    for (const auto& v : unary_verbs)
        if (starts_with(s, v.prefix)) return unary(v.cat, s.substr(v.prefix.size()), lex);
    for (std::string_view put : {std::string_view("put "), std::string_view("place ")}) {
        if (!starts_with(s, put)) continue;
        std::string_view rest = s.substr(put.size());
        auto andpos = rest.find(" and grasp ");
        if (andpos != std::string_view::npos) {
            auto cmd = binary(ManipCategory::PutAndGrasp, rest.substr(0, andpos), " to ", lex);
            auto grabbed = one_class(rest.substr(andpos + 11), lex);
            if (!cmd || !grabbed || *grabbed != cmd->args[1]) return std::nullopt;
            return cmd;
        }
        if (auto cmd = binary(ManipCategory::Put, rest, " to ", lex)) return cmd;
        return binary(ManipCategory::Put, rest, " in ", lex);
    }
    return std::nullopt;
}

std::string to_string(InvocationKind k) {
    switch (k) {
        case InvocationKind::EG: return "EG";
        case InvocationKind::OG: return "OG";
        case InvocationKind::SD: return "SD";
        case InvocationKind::ADExplore: return "AD-explore";
        case InvocationKind::ADManip: return "AD-manip";
        case InvocationKind::ES: return "ES";
    }
    return {};
}

InvocationKind parse_invocation_kind(std::string_view s) {
    for (auto k : {InvocationKind::EG, InvocationKind::OG, InvocationKind::SD, InvocationKind::ADExplore,
                   InvocationKind::ADManip, InvocationKind::ES})
        if (to_string(k) == s) return k;
    throw Error("parse", "unknown invocation kind: " + std::string(s));
}

SchedulerAction SchedulerAction::explore(const std::string& query) {
    return {false, {{InvocationKind::EG, query}, {InvocationKind::ADExplore, ""}, {InvocationKind::OG, query}}};
}

SchedulerAction SchedulerAction::manipulate(const std::string& command) {
    return {false, {{InvocationKind::SD, ""}, {InvocationKind::ADManip, command}, {InvocationKind::ES, command}}};
}

std::string to_string(ChainKind k) {
    switch (k) {
        case ChainKind::Exploration: return "exploration";
        case ChainKind::Manipulation: return "manipulation";
        case ChainKind::Stop: return "stop";
        case ChainKind::Illegal: return "illegal";
    }
    return {};
}

ChainKind classify(const SchedulerAction& a) {
    if (a.stop) return a.chain.empty() ? ChainKind::Stop : ChainKind::Illegal;
    const auto& c = a.chain;
    if (c.size() != 3) return ChainKind::Illegal;
    if (c[0].kind == InvocationKind::EG && c[1].kind == InvocationKind::ADExplore && c[2].kind == InvocationKind::OG &&
        !c[0].query.empty() && c[0].query == c[2].query && c[1].query.empty())
        return ChainKind::Exploration;
    if (c[0].kind == InvocationKind::SD && c[1].kind == InvocationKind::ADManip && c[2].kind == InvocationKind::ES &&
        c[0].query.empty() && !c[1].query.empty() && c[1].query == c[2].query)
        return ChainKind::Manipulation;
    return ChainKind::Illegal;
}

std::string render_scheduler_output(const SchedulerAction& a) {
    if (a.stop) return "stop()";
    std::string out;
    int n = 1;
    for (const auto& inv : a.chain) {
        if (!out.empty()) out += "\n";
        out += std::to_string(n++) + ". ";
        switch (inv.kind) {
            case InvocationKind::EG: out += "exploration_guidance(" + inv.query + ")"; break;
            case InvocationKind::ADExplore: out += "exploration_planner()"; break;
            case InvocationKind::OG: out += "object_grounding(" + inv.query + ")"; break;
            case InvocationKind::SD: out += "scene_description()"; break;
            case InvocationKind::ADManip: out += "manipulation_planner(" + inv.query + ")"; break;
            case InvocationKind::ES: out += "execution_summary(" + inv.query + ")"; break;
        }
    }
    return out;
}

std::optional<SchedulerAction> parse_scheduler_output(std::string_view text) {
    std::string t = trim(text);
    if (t == "stop()") return SchedulerAction::halt();
    SchedulerAction a;
    int expect = 1;
    for (const auto& raw : split(t, '\n')) {
        std::string line = trim(raw);
        std::string prefix = std::to_string(expect++) + ". ";
        if (!starts_with(line, prefix)) return std::nullopt;
        line = line.substr(prefix.size());
        auto open = line.find('(');
        if (open == std::string::npos || line.back() != ')') return std::nullopt;
        std::string name = line.substr(0, open);
        std::string arg = line.substr(open + 1, line.size() - open - 2);
        InvocationKind k;
        if (name == "exploration_guidance") k = InvocationKind::EG;
        else if (name == "exploration_planner") k = InvocationKind::ADExplore;
        else if (name == "object_grounding") k = InvocationKind::OG;
        else if (name == "scene_description") k = InvocationKind::SD;
        else if (name == "manipulation_planner") k = InvocationKind::ADManip;
        else if (name == "execution_summary") k = InvocationKind::ES;
        else return std::nullopt;
        a.chain.push_back({k, arg});
    }
    if (classify(a) == ChainKind::Illegal) return std::nullopt;
    return a;
}

Json to_json(const SchedulerAction& a) {
    if (a.stop) return Json{{"stop", true}};
    Json chain = Json::array();
    for (const auto& inv : a.chain) chain.push_back({{"kind", to_string(inv.kind)}, {"query", inv.query}});
    return Json{{"stop", false}, {"chain", chain}};
}

SchedulerAction scheduler_action_from_json(const Json& j) {
    SchedulerAction a;
    a.stop = j.at("stop").get<bool>();
    if (j.contains("chain"))
        for (const auto& inv : j.at("chain"))
            a.chain.push_back({parse_invocation_kind(inv.at("kind").get<std::string>()), inv.at("query").get<std::string>()});
    return a;
}

bool canonical_equal(const SchedulerAction& a, const SchedulerAction& b, const Lexicon& lex) {
    ChainKind ka = classify(a), kb = classify(b);
    if (ka != kb || ka == ChainKind::Illegal) return false;
    if (ka == ChainKind::Stop) return true;
    if (ka == ChainKind::Exploration) {
        auto ca = lex.canonicalize(a.chain[0].query);
        auto cb = lex.canonicalize(b.chain[0].query);
        return !ca.empty() && ca == cb;
    }
    auto ca = parse_command(a.chain[1].query, lex);
    auto cb = parse_command(b.chain[1].query, lex);
    return ca && cb && *ca == *cb;
}

}  // namespace capita
