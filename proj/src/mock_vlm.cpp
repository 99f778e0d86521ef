#include "tseg/agent.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tseg::agent {

namespace {

using nlohmann::ordered_json;

struct Request {
    std::string task;
    std::string text; ///< the original (non-retry) prompt of the task
};

std::string task_of(const std::string& text)
{
    const std::string open = "[task: ";
    if (text.rfind(open, 0) != 0) return {};
    const auto end = text.find_first_of(" ]", open.size());
    return text.substr(open.size(), end - open.size());
}

Request current_request(std::span<const ChatTurn> history)
{
    if (history.empty() || history.back().role != Role::user) throw ProtocolError("mock model expects a user turn last");
    Request req{task_of(history.back().text), {}};
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->role != Role::user || task_of(it->text) != req.task) continue;
        if (it->text.find(" retry]\n") != std::string::npos) continue;
        req.text = it->text;
        return req;
    }
    throw ProtocolError("mock model could not find the prompt for task '" + req.task + "'");
}

std::vector<ToothDossier> dossiers_of(std::span<const ChatTurn> history)
{
    for (const auto& t : history)
        if (t.role == Role::user && task_of(t.text) == "round1_nontooth") return parse_dossier_table(t.text);
    throw ProtocolError("mock model saw no dossier table");
}

std::string field(const std::string& text, const std::string& key)
{
    std::istringstream in(text);
    std::string line;
    const std::string prefix = key + ": ";
    while (std::getline(in, line))
        if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    throw ProtocolError("prompt lacks '" + key + "'");
}

std::vector<int> id_list(const std::string& s)
{
    std::vector<int> ids;
    if (s == "-") return ids;
    std::istringstream in(s);
    int v;
    while (in >> v) ids.push_back(v);
    return ids;
}

double median(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string reply(const ordered_json& j) { return "```json\n" + j.dump() + "\n```"; }

/// Candidates in arch order, as dossier pointers.
std::vector<const ToothDossier*> in_arch_order(const std::vector<ToothDossier>& all, const std::vector<int>& ids)
{
    std::vector<const ToothDossier*> out;
    for (int id : ids)
        for (const auto& d : all)
            if (d.id == id) out.push_back(&d);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) {
        if (a->arch_parameter != b->arch_parameter) return a->arch_parameter < b->arch_parameter;
        return a->id < b->id;
    });
    return out;
}

/// Centroid distance between neighbours in units of their mean second extent, which tracks
/// the crown width for every tooth type.
double spacing(const ToothDossier& a, const ToothDossier& b)
{
    const double dist = std::hypot(a.centroid.x() - b.centroid.x(), a.centroid.y() - b.centroid.y());
    return dist / std::max(0.5 * (a.extents[1] + b.extents[1]), 1e-9);
}

struct Teeth {
    std::vector<std::vector<const ToothDossier*>> groups; ///< pieces of one tooth, in arch order
    std::vector<const ToothDossier*> kept;                ///< largest piece of each group
    std::vector<double> gaps;                             ///< spacing between kept[i] and kept[i + 1]
    double median_gap = 0.0;

    std::optional<std::size_t> slot_of(int id) const
    {
        for (std::size_t g = 0; g < groups.size(); ++g)
            for (auto* d : groups[g])
                if (d->id == id) return g;
        return std::nullopt;
    }
};

/// Groups neighbours whose arch parameters differ by less than split_factor x the median
/// difference; each group counts as one tooth.
Teeth collapse_fragments(const std::vector<const ToothDossier*>& order, const MockVlmConfig& cfg)
{
    Teeth t;
    std::vector<double> steps;
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
        steps.push_back(order[i + 1]->arch_parameter - order[i]->arch_parameter);
    const double min_step = cfg.split_factor * median(steps);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i > 0 && steps[i - 1] < min_step)
            t.groups.back().push_back(order[i]);
        else
            t.groups.push_back({order[i]});
    }
    for (const auto& g : t.groups)
        t.kept.push_back(*std::max_element(g.begin(), g.end(), [](auto* a, auto* b) {
            if (a->volume != b->volume) return a->volume < b->volume;
            return a->id > b->id;
        }));
    for (std::size_t i = 0; i + 1 < t.kept.size(); ++i) t.gaps.push_back(spacing(*t.kept[i], *t.kept[i + 1]));
    t.median_gap = median(t.gaps);
    return t;
}

std::string answer_round1(const std::vector<ToothDossier>& ds, const MockVlmConfig& cfg)
{
    std::vector<double> largest;
    for (const auto& d : ds) largest.push_back(d.extents[0]);
    const double med = median(largest);
    std::vector<int> flagged;
    for (const auto& d : ds) {
        if (d.volume < cfg.min_volume || d.extents[0] < cfg.min_extent || d.extents[0] > cfg.max_extent_factor * med ||
            d.residual > cfg.max_residual)
            flagged.push_back(d.id);
    }
    std::sort(flagged.begin(), flagged.end());
    return reply(ordered_json{{"non_tooth", flagged}});
}

/// Index into kept of the anchor(s).
std::vector<std::size_t> anchor_slots(const Teeth& t, double apex, const MockVlmConfig& cfg)
{
    if (t.kept.empty()) return {};
    if (t.kept.size() == 1) return {0};
    // pairs whose parameters straddle the apex; more than one only when the apex hits a parameter
    std::size_t best = 0;
    double best_score = 0.0;
    bool have = false;
    for (std::size_t i = 0; i + 1 < t.kept.size(); ++i) {
        if (!(t.kept[i]->arch_parameter <= apex && apex <= t.kept[i + 1]->arch_parameter)) continue;
        const double va = t.kept[i]->volume, vb = t.kept[i + 1]->volume;
        const double score = std::abs(std::log(std::max(va, 1e-9) / std::max(vb, 1e-9)));
        if (!have || score < best_score) {
            best = i;
            best_score = score;
            have = true;
        }
    }
    if (!have) return {apex < t.kept.front()->arch_parameter ? std::size_t{0} : t.kept.size() - 1};
    if (t.gaps[best] > cfg.gap_factor * t.median_gap) {
        // one central incisor is missing: keep the neighbour nearer the apex
        const double da = apex - t.kept[best]->arch_parameter, db = t.kept[best + 1]->arch_parameter - apex;
        return {da < db ? best : best + 1};
    }
    return {best, best + 1};
}

std::string answer_round2(const std::vector<ToothDossier>& ds, const std::string& prompt, const MockVlmConfig& cfg)
{
    const auto teeth = collapse_fragments(in_arch_order(ds, id_list(field(prompt, "candidates"))), cfg);
    const double apex = std::stod(field(prompt, "arch_apex"));
    const auto slots = anchor_slots(teeth, apex, cfg);
    std::vector<int> ids;
    if (slots.size() == 2) {
        // the touching pieces, so the pair stays adjacent in the full ordering
        ids = {teeth.groups[slots[0]].back()->id, teeth.groups[slots[1]].front()->id};
    } else {
        for (std::size_t s : slots) ids.push_back(teeth.kept[s]->id);
    }
    return reply(ordered_json{{"central_incisors", ids}});
}

std::string code_text(int code) { return code == kNonTooth ? "NON_TOOTH" : std::to_string(code); }

ordered_json assignment_json(const FdiAssignment& a)
{
    ordered_json j = ordered_json::object();
    for (const auto& [id, code] : a.codes) j[std::to_string(id)] = code_text(code);
    return j;
}

std::string answer_round3(const std::vector<ToothDossier>& ds, const std::string& prompt, const MockVlmConfig& cfg)
{
    const auto cands = id_list(field(prompt, "candidates"));
    const auto anchors = id_list(field(prompt, "anchors"));
    const std::string jaw_text = field(prompt, "jaw");
    const double crown_z = std::stod(field(prompt, "crown_up_world_z"));
    const double apex = std::stod(field(prompt, "arch_apex"));
    const bool decide_jaw = jaw_text == "unknown";
    const Jaw jaw = decide_jaw ? (crown_z >= 0.0 ? Jaw::lower : Jaw::upper) : jaw_from_string(jaw_text);

    const auto teeth = collapse_fragments(in_arch_order(ds, cands), cfg);
    FdiAssignment a;
    for (int id : cands) a.codes[id] = kNonTooth;

    const auto& kept = teeth.kept;
    std::vector<std::size_t> slots;
    for (int id : anchors)
        if (auto s = teeth.slot_of(id)) slots.push_back(*s);
    std::sort(slots.begin(), slots.end());
    slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
    if (slots.empty() && !kept.empty()) slots = anchor_slots(teeth, apex, cfg);

    if (!slots.empty()) {
        auto put = [&](std::size_t i, bool low, int pos) {
            a.codes[kept[i]->id] = pos <= 8 ? make_fdi(quadrant_for_side(low, jaw), pos) : kNonTooth;
        };
        const std::size_t lo_start = slots.front(), hi_start = slots.back();
        bool anchor_low = true;
        if (slots.size() >= 2) {
            put(lo_start, true, 1);
            put(hi_start, false, 1);
        } else {
            anchor_low = kept[lo_start]->arch_parameter < apex;
            put(lo_start, anchor_low, 1);
        }
        const double gap_limit = cfg.gap_factor * teeth.median_gap;
        // with one anchor the missing partner already accounts for the first step across the midline
        const bool force_low = slots.size() == 1 && !anchor_low;
        const bool force_high = slots.size() == 1 && anchor_low;
        int pos = 1;
        for (std::size_t i = lo_start; i-- > 0;) {
            const bool first = i + 1 == lo_start;
            pos += first && force_low ? 1 : (teeth.gaps[i] > gap_limit ? 2 : 1);
            put(i, true, pos);
        }
        pos = 1;
        for (std::size_t i = hi_start + 1; i < kept.size(); ++i) {
            const bool first = i == hi_start + 1;
            pos += first && force_high ? 1 : (teeth.gaps[i - 1] > gap_limit ? 2 : 1);
            put(i, false, pos);
        }
    }

    ordered_json j;
    if (decide_jaw) j["jaw"] = to_string(jaw);
    j["assignment"] = assignment_json(a);
    return reply(j);
}

FdiAssignment parse_assignment_table(const std::string& prompt)
{
    FdiAssignment a;
    std::istringstream in(prompt);
    std::string line;
    bool in_table = false;
    while (std::getline(in, line)) {
        if (line.rfind("| id | fdi |", 0) == 0) {
            in_table = true;
            continue;
        }
        if (!in_table || line.rfind("|---", 0) == 0) continue;
        if (line.empty() || line[0] != '|') break;
        std::istringstream row(line);
        std::string bar, id, code;
        row >> bar >> id >> bar >> code;
        a.codes[std::stoi(id)] = code == "NON_TOOTH" ? kNonTooth : std::stoi(code);
    }
    return a;
}

std::string answer_round4(const std::vector<ToothDossier>& ds, const std::string& prompt)
{
    auto a = parse_assignment_table(prompt);
    const double midline = std::stod(field(prompt, "midline"));
    const Jaw jaw = jaw_from_string(field(prompt, "jaw"));

    std::vector<const ToothDossier*> low, high;
    for (const auto& [id, code] : a.codes) {
        if (code == kNonTooth) continue;
        for (const auto& d : ds)
            if (d.id == id) (d.arch_parameter < midline ? low : high).push_back(&d);
    }
    auto outward = [&](auto* x, auto* y) {
        const double dx = std::abs(x->arch_parameter - midline), dy = std::abs(y->arch_parameter - midline);
        if (dx != dy) return dx < dy;
        return x->id < y->id;
    };
    std::sort(low.begin(), low.end(), outward);
    std::sort(high.begin(), high.end(), outward);
    for (auto [side, is_low] : {std::pair{&low, true}, std::pair{&high, false}}) {
        int last = 0;
        for (auto* d : *side) {
            const int pos = std::max(fdi_position(a.codes[d->id]), last + 1);
            a.codes[d->id] = pos <= 8 ? make_fdi(quadrant_for_side(is_low, jaw), pos) : kNonTooth;
            last = pos;
        }
    }
    return reply(ordered_json{{"assignment", assignment_json(a)}});
}

} // namespace

std::string MockVlm::complete(std::span<const ChatTurn> history)
{
    const auto req = current_request(history);
    const auto ds = dossiers_of(history);
    if (req.task == "round1_nontooth") return answer_round1(ds, cfg_);
    if (req.task == "round2_central_incisors") return answer_round2(ds, req.text, cfg_);
    if (req.task == "round3_full_arch") return answer_round3(ds, req.text, cfg_);
    if (req.task == "round4_correct") return answer_round4(ds, req.text);
    throw ProtocolError("mock model does not know task '" + req.task + "'");
}

std::string StubbornVlm::complete(std::span<const ChatTurn> history)
{
    const auto req = current_request(history);
    if (req.task != "round4_correct") return inner_.complete(history);
    return reply(ordered_json{{"assignment", assignment_json(parse_assignment_table(req.text))}});
}

} // namespace tseg::agent
