#include "tseg/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace tseg::agent {

std::vector<ToothDossier> build_dossiers(const TriMesh& mesh, const FaceLabeling& reordered,
                                         const render::OcclusalFrame& frame, const arch::ArchCurve& curve,
                                         const arch::ArchOrdering& ordering)
{
    const auto geom = face_geometry(mesh);
    const auto ids = instance_ids(reordered);
    std::vector<ToothDossier> out;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const int id = ids[k];
        ToothDossier d;
        d.id = id;
        for (const auto& e : ordering.entries)
            if (e.new_id == id) d.arch_parameter = e.parameter;
        d.centroid = frame.to_local(instance_centroid(geom, reordered, id));
        const auto obb = instance_obb(mesh, reordered, id);
        d.extents = obb.extents;
        d.volume = obb.volume();
        d.residual = arch::curve_distance(curve, Vec2(d.centroid.x(), d.centroid.y()));
        if (k > 0) d.predecessor = ids[k - 1];
        if (k + 1 < ids.size()) d.successor = ids[k + 1];
        out.push_back(d);
    }
    return out;
}

std::string to_string(ViolationKind kind)
{
    switch (kind) {
    case ViolationKind::duplicate_fdi: return "duplicate_fdi";
    case ViolationKind::non_monotone_sequence: return "non_monotone_sequence";
    case ViolationKind::quadrant_inconsistency: return "quadrant_inconsistency";
    case ViolationKind::volume_asymmetry: return "volume_asymmetry";
    }
    return "";
}

bool quadrant_on_low_side(int quadrant, Jaw jaw)
{
    // low arch parameter = the frame's -right side: patient left on a lower arch,
    // patient right on an upper arch
    return jaw == Jaw::lower ? quadrant == 3 : quadrant == 1;
}

int quadrant_for_side(bool low_side, Jaw jaw)
{
    if (jaw == Jaw::lower) return low_side ? 3 : 4;
    return low_side ? 1 : 2;
}

namespace {

const ToothDossier& dossier_of(std::span<const ToothDossier> dossiers, int id)
{
    for (const auto& d : dossiers)
        if (d.id == id) return d;
    throw PreconditionError("no dossier for instance " + std::to_string(id));
}

std::string join(const std::vector<int>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

bool jaw_has_quadrant(int quadrant, Jaw jaw)
{
    return jaw == Jaw::lower ? (quadrant == 3 || quadrant == 4) : (quadrant == 1 || quadrant == 2);
}

} // namespace

std::vector<Violation> check_constraints(const FdiAssignment& assignment, std::span<const ToothDossier> dossiers,
                                         const ConstraintContext& ctx)
{
    struct Coded {
        int id;
        int code;
        double param;
        double volume;
    };
    std::vector<Coded> coded;
    for (const auto& [id, code] : assignment.codes) {
        const auto& d = dossier_of(dossiers, id);
        if (code != kNonTooth) coded.push_back({id, code, d.arch_parameter, d.volume});
    }
    std::sort(coded.begin(), coded.end(), [](const Coded& a, const Coded& b) {
        if (a.param != b.param) return a.param < b.param;
        return a.id < b.id;
    });

    std::vector<Violation> out;

    std::map<int, std::vector<int>> by_code;
    for (const auto& c : coded) by_code[c.code].push_back(c.id);
    for (const auto& [code, ids] : by_code)
        if (ids.size() > 1)
            out.push_back({ViolationKind::duplicate_fdi, ids,
                           "code " + std::to_string(code) + " is assigned to instances " + join(ids)});

    // positions must fall strictly, then rise strictly, along the arch
    const std::size_t m = coded.size();
    if (m >= 2) {
        std::size_t best_breaks = m + 1, best_split = 0;
        for (std::size_t t = 0; t <= m; ++t) {
            std::size_t breaks = 0;
            for (std::size_t i = 0; i + 1 < t; ++i)
                breaks += fdi_position(coded[i].code) <= fdi_position(coded[i + 1].code);
            for (std::size_t i = t; i + 1 < m; ++i)
                breaks += fdi_position(coded[i].code) >= fdi_position(coded[i + 1].code);
            if (breaks < best_breaks) {
                best_breaks = breaks;
                best_split = t;
            }
        }
        if (best_breaks > 0) {
            std::vector<int> ids;
            for (std::size_t i = 0; i + 1 < m; ++i) {
                const int a = fdi_position(coded[i].code), b = fdi_position(coded[i + 1].code);
                const bool broken = i + 1 < best_split ? a <= b : (i >= best_split ? a >= b : false);
                if (broken) {
                    ids.push_back(coded[i].id);
                    ids.push_back(coded[i + 1].id);
                }
            }
            std::sort(ids.begin(), ids.end());
            ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
            out.push_back({ViolationKind::non_monotone_sequence, ids,
                           "positions along the arch do not fall to the midline and rise again at instances " +
                               join(ids)});
        }
    }

    for (const auto& c : coded) {
        const int q = fdi_quadrant(c.code);
        const bool low = c.param < ctx.midline;
        if (!jaw_has_quadrant(q, ctx.jaw)) {
            out.push_back({ViolationKind::quadrant_inconsistency, {c.id},
                           "code " + std::to_string(c.code) + " does not belong to the " + to_string(ctx.jaw) + " jaw"});
        } else if (quadrant_on_low_side(q, ctx.jaw) != low) {
            out.push_back({ViolationKind::quadrant_inconsistency, {c.id},
                           "code " + std::to_string(c.code) + " lies on the wrong side of the midline"});
        }
    }

    for (const auto& [code, ids] : by_code) {
        const int q = fdi_quadrant(code);
        if (q != 1 && q != 3) continue;
        auto mirror = by_code.find(fdi_mirror(code));
        if (mirror == by_code.end()) continue;
        const double va = dossier_of(dossiers, ids.front()).volume;
        const double vb = dossier_of(dossiers, mirror->second.front()).volume;
        if (!(va > 0.0 && vb > 0.0)) continue;
        const double ratio = va / vb;
        if (ratio > ctx.volume_ratio_limit || ratio < 1.0 / ctx.volume_ratio_limit) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "codes %d and %d differ in volume by a factor of %.2f", code,
                          fdi_mirror(code), ratio >= 1.0 ? ratio : 1.0 / ratio);
            out.push_back({ViolationKind::volume_asymmetry, {ids.front(), mirror->second.front()}, buf});
        }
    }
    return out;
}

// ------------------------------------------------------------------ orchestration

JawMode jaw_mode_from_string(const std::string& s)
{
    if (s == "upper") return JawMode::upper;
    if (s == "lower") return JawMode::lower;
    if (s == "auto") return JawMode::autodetect;
    throw PreconditionError("jaw must be upper, lower or auto (got '" + s + "')");
}

std::string to_string(JawMode mode)
{
    switch (mode) {
    case JawMode::upper: return "upper";
    case JawMode::lower: return "lower";
    case JawMode::autodetect: return "auto";
    }
    return "auto";
}

double midline_of(std::span<const ToothDossier> dossiers, const std::vector<int>& anchors, double apex)
{
    if (anchors.size() != 2) return apex;
    return 0.5 * (dossier_of(dossiers, anchors[0]).arch_parameter + dossier_of(dossiers, anchors[1]).arch_parameter);
}

namespace {

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string ids_line(const std::vector<int>& ids)
{
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + std::to_string(ids[i]);
    return s.empty() ? "-" : s;
}

std::vector<int> candidates_of(std::span<const ToothDossier> dossiers, const std::set<int>& non_tooth)
{
    std::vector<const ToothDossier*> v;
    for (const auto& d : dossiers)
        if (!non_tooth.count(d.id)) v.push_back(&d);
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) {
        if (a->arch_parameter != b->arch_parameter) return a->arch_parameter < b->arch_parameter;
        return a->id < b->id;
    });
    std::vector<int> ids;
    for (auto* d : v) ids.push_back(d->id);
    return ids;
}

std::string jaw_rules(std::optional<Jaw> jaw)
{
    auto rule = [](Jaw j) {
        return std::string(j == Jaw::lower ? "Lower" : "Upper") + " jaw: instances whose arch parameter is below the midline take quadrant " +
               std::to_string(quadrant_for_side(true, j)) + ", instances above it take quadrant " +
               std::to_string(quadrant_for_side(false, j)) + ".";
    };
    if (jaw) return rule(*jaw);
    return "The jaw is not known. Decide it from the crown direction: crown_up_world_z > 0 means a lower jaw.\n" +
           rule(Jaw::lower) + "\n" + rule(Jaw::upper);
}

std::string assignment_table(const FdiAssignment& a)
{
    std::string s = "| id | fdi |\n|---|---|\n";
    for (const auto& [id, code] : a.codes) s += "| " + std::to_string(id) + " | " + format_code(code) + " |\n";
    return s;
}

std::string violations_text(const std::vector<Violation>& v)
{
    std::string s;
    for (const auto& x : v) s += "- " + to_string(x.kind) + " [" + ids_line(x.ids) + "]: " + x.detail + "\n";
    return s.empty() ? "- none\n" : s;
}

Jaw jaw_from_crown(double crown_up_world_z) { return crown_up_world_z >= 0.0 ? Jaw::lower : Jaw::upper; }

FdiAssignment remap_jaw(const FdiAssignment& a, Jaw from, Jaw to)
{
    if (from == to) return a;
    FdiAssignment out = a;
    for (auto& [id, code] : out.codes) {
        if (code == kNonTooth) continue;
        const int q = fdi_quadrant(code);
        for (bool low : {true, false})
            if (q == quadrant_for_side(low, from)) code = make_fdi(quadrant_for_side(low, to), fdi_position(code));
    }
    return out;
}

bool adjacent_in(const std::vector<int>& order, const std::vector<int>& ids)
{
    if (ids.size() < 2) return true;
    const auto a = std::find(order.begin(), order.end(), ids[0]);
    const auto b = std::find(order.begin(), order.end(), ids[1]);
    return std::abs(static_cast<long>(a - b)) == 1;
}

// Shared by the live run and the replay so both pick the same final answer.
struct Selection {
    FdiAssignment assignment;
    std::vector<Violation> violations;
};

Selection pick_best(const std::vector<FdiAssignment>& attempts, std::span<const ToothDossier> dossiers,
                    const ConstraintContext& ctx)
{
    Selection best;
    bool have = false;
    for (const auto& a : attempts) {
        auto v = check_constraints(a, dossiers, ctx);
        if (!have || v.size() < best.violations.size()) {
            best = {a, std::move(v)};
            have = true;
        }
    }
    return best;
}

FdiAssignment with_non_tooth(FdiAssignment a, const std::set<int>& non_tooth)
{
    for (int id : non_tooth) a.codes[id] = kNonTooth;
    return a;
}

} // namespace

Agent::Agent(ChatBackend& backend, AgentConfig cfg) : backend_(backend), cfg_(cfg)
{
    if (cfg_.max_correction_rounds < 0) throw PreconditionError("max_correction_rounds must be >= 0");
}

std::string Agent::ask(const std::string& task, std::string text, std::vector<ImageRGB> images)
{
    if (history_.empty()) {
        ChatTurn sys{Role::system, prompt_template("system"), {}};
        transcript_.add("system", sys);
        history_.push_back(std::move(sys));
    }
    history_.push_back({Role::user, std::move(text), std::move(images)});
    try {
        auto reply = chat(backend_, history_, cfg_.max_images);
        transcript_.add(task, history_.back());
        ChatTurn answer{Role::assistant, reply, {}};
        transcript_.add(task, answer);
        history_.push_back(std::move(answer));
        return reply;
    } catch (...) {
        history_.pop_back();
        throw;
    }
}

template <class Parse>
auto Agent::ask_parsed(const std::string& task, std::string text, std::vector<ImageRGB> images, Parse&& parse)
{
    auto reply = ask(task, std::move(text), std::move(images));
    try {
        return parse(reply);
    } catch (const ParseError& first) {
        const auto retry = render_template(prompt_template("reask"), {{"task", task},
                                                                      {"version", std::string(kPromptVersion)},
                                                                      {"reason", first.what()}});
        reply = ask(task, retry, {});
        try {
            return parse(reply);
        } catch (const ParseError& second) {
            throw ParseError(task + ": reply unusable after one retry: " + second.what());
        }
    }
}

std::set<int> Agent::round1_nontooth(const AgentInputs& in)
{
    if (in.dossiers.empty()) throw PreconditionError("round 1 needs at least one instance");
    std::set<int> known;
    for (const auto& d : in.dossiers) known.insert(d.id);
    const std::string context = "arch_apex: " + num(in.arch_apex) + "\ncrown_up_world_z: " + num(in.crown_up_world_z);
    const auto text = render_template(prompt_template("round1_nontooth"),
                                      {{"version", std::string(kPromptVersion)},
                                       {"table", format_dossier_table(in.dossiers)},
                                       {"context", context}});
    return ask_parsed("round1_nontooth", text, in.images,
                      [&](const std::string& r) { return parse_non_tooth(r, known); });
}

std::vector<int> Agent::round2_central_incisors(const AgentInputs& in, const std::set<int>& non_tooth)
{
    const auto cands = candidates_of(in.dossiers, non_tooth);
    if (cands.empty()) return {};
    const std::set<int> known(cands.begin(), cands.end());
    const std::string context = "candidates: " + ids_line(cands) + "\narch_apex: " + num(in.arch_apex);
    const auto text = render_template(prompt_template("round2_central_incisors"),
                                      {{"version", std::string(kPromptVersion)}, {"context", context}});
    auto ids = ask_parsed("round2_central_incisors", text, {},
                          [&](const std::string& r) { return parse_central_incisors(r, known); });
    if (!adjacent_in(cands, ids))
        throw ProtocolError("central incisors " + ids_line(ids) + " are not adjacent along the arch");
    return ids;
}

FullArchReply Agent::round3_full_arch(const AgentInputs& in, const std::set<int>& non_tooth,
                                      const std::vector<int>& anchors, std::optional<Jaw> jaw)
{
    const auto cands = candidates_of(in.dossiers, non_tooth);
    if (cands.empty()) return {};
    const std::set<int> known(cands.begin(), cands.end());
    const double midline = midline_of(in.dossiers, anchors, in.arch_apex);
    const std::string context = "candidates: " + ids_line(cands) + "\nanchors: " + ids_line(anchors) +
                                "\nmidline: " + num(midline) + "\narch_apex: " + num(in.arch_apex) +
                                "\njaw: " + (jaw ? to_string(*jaw) : std::string("unknown")) +
                                "\ncrown_up_world_z: " + num(in.crown_up_world_z);
    const std::string schema = jaw ? "```json\n{\"assignment\": {\"<id>\": \"<fdi code or NON_TOOTH>\"}}\n```"
                                   : "```json\n{\"jaw\": \"<upper|lower>\", \"assignment\": {\"<id>\": \"<fdi code or NON_TOOTH>\"}}\n```";
    const auto text = render_template(prompt_template("round3_full_arch"), {{"version", std::string(kPromptVersion)},
                                                                            {"context", context},
                                                                            {"jaw_rules", jaw_rules(jaw)},
                                                                            {"schema", schema}});
    return ask_parsed("round3_full_arch", text, {},
                      [&](const std::string& r) { return parse_assignment(r, known, !jaw.has_value()); });
}

FdiAssignment Agent::round4_correct(const AgentInputs& in, FdiAssignment assignment, const std::vector<int>& anchors,
                                    Jaw jaw, AgentOutcome& outcome)
{
    const ConstraintContext ctx{jaw, midline_of(in.dossiers, anchors, in.arch_apex), cfg_.volume_ratio_limit};
    std::set<int> known;
    for (const auto& [id, code] : assignment.codes) known.insert(id);
    const std::vector<int> cands(known.begin(), known.end());

    std::vector<FdiAssignment> attempts{assignment};
    auto violations = check_constraints(assignment, in.dossiers, ctx);
    int rounds = 0;
    while (!violations.empty() && rounds < cfg_.max_correction_rounds) {
        ++rounds;
        const std::string context = "candidates: " + ids_line(cands) + "\nanchors: " + ids_line(anchors) +
                                    "\nmidline: " + num(ctx.midline) + "\njaw: " + to_string(jaw);
        const auto text = render_template(prompt_template("round4_correct"),
                                          {{"version", std::string(kPromptVersion)},
                                           {"assignment", assignment_table(assignment)},
                                           {"violations", violations_text(violations)},
                                           {"context", context}});
        assignment = ask_parsed("round4_correct", text, {},
                                [&](const std::string& r) { return parse_assignment(r, known).assignment; });
        attempts.push_back(assignment);
        violations = check_constraints(assignment, in.dossiers, ctx);
    }
    auto best = pick_best(attempts, in.dossiers, ctx);
    outcome.correction_rounds = rounds;
    outcome.violations = best.violations;
    outcome.non_converged = !best.violations.empty();
    return best.assignment;
}

AgentOutcome Agent::run(const AgentInputs& in)
{
    AgentOutcome out;
    out.non_tooth = round1_nontooth(in);
    out.central_incisors = round2_central_incisors(in, out.non_tooth);

    std::optional<Jaw> jaw;
    if (cfg_.jaw == JawMode::lower) jaw = Jaw::lower;
    if (cfg_.jaw == JawMode::upper) jaw = Jaw::upper;
    auto full = round3_full_arch(in, out.non_tooth, out.central_incisors, jaw);

    out.jaw = jaw.value_or(Jaw::lower);
    if (!jaw) {
        const Jaw geometric = jaw_from_crown(in.crown_up_world_z);
        const Jaw answered = full.jaw.value_or(geometric);
        out.jaw = geometric;
        out.jaw_overridden = answered != geometric;
        full.assignment = remap_jaw(full.assignment, answered, geometric);
    }

    if (full.assignment.codes.empty()) {
        out.assignment = with_non_tooth({}, out.non_tooth);
        return out;
    }
    auto best = round4_correct(in, full.assignment, out.central_incisors, out.jaw, out);
    out.assignment = with_non_tooth(std::move(best), out.non_tooth);
    return out;
}

// ------------------------------------------------------------------ replay

namespace {

std::string context_value(const std::string& text, const std::string& key)
{
    std::istringstream in(text);
    std::string line;
    const std::string prefix = key + ": ";
    while (std::getline(in, line))
        if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    throw ParseError("prompt lacks '" + key + "'");
}

} // namespace

AgentOutcome replay(const Transcript& transcript, const AgentConfig& cfg)
{
    AgentOutcome out;
    std::vector<ToothDossier> dossiers;
    double apex = 0.0, crown_z = 1.0;
    std::set<int> all_ids;
    std::optional<std::set<int>> non_tooth;
    std::optional<std::vector<int>> anchors;
    std::optional<FullArchReply> full;
    std::vector<FdiAssignment> corrections;
    std::set<int> candidate_ids;

    const auto& es = transcript.entries();
    for (std::size_t i = 0; i < es.size(); ++i) {
        const auto& e = es[i];
        if (e.role == Role::user && e.task == "round1_nontooth" && dossiers.empty()) {
            dossiers = parse_dossier_table(e.text);
            apex = std::stod(context_value(e.text, "arch_apex"));
            crown_z = std::stod(context_value(e.text, "crown_up_world_z"));
            for (const auto& d : dossiers) all_ids.insert(d.id);
            continue;
        }
        if (e.role != Role::assistant) continue;
        // a reply followed by a retry of the same task was rejected when it was received
        const bool superseded = i + 1 < es.size() && es[i + 1].role == Role::user && es[i + 1].task == e.task &&
                                es[i + 1].text.find(" retry]") != std::string::npos;
        if (superseded) continue;
        if (e.task == "round1_nontooth") {
            non_tooth = parse_non_tooth(e.text, all_ids);
            candidate_ids.clear();
            for (int id : all_ids)
                if (!non_tooth->count(id)) candidate_ids.insert(id);
        } else if (e.task == "round2_central_incisors") {
            anchors = parse_central_incisors(e.text, candidate_ids);
        } else if (e.task == "round3_full_arch") {
            full = parse_assignment(e.text, candidate_ids, cfg.jaw == JawMode::autodetect);
        } else if (e.task == "round4_correct") {
            corrections.push_back(parse_assignment(e.text, candidate_ids).assignment);
        }
    }
    if (!non_tooth) throw ParseError("transcript holds no round 1 answer");
    out.non_tooth = *non_tooth;
    out.central_incisors = anchors.value_or(std::vector<int>{});

    if (cfg.jaw == JawMode::autodetect) {
        const Jaw geometric = jaw_from_crown(crown_z);
        out.jaw = geometric;
        if (full) {
            const Jaw answered = full->jaw.value_or(geometric);
            out.jaw_overridden = answered != geometric;
            full->assignment = remap_jaw(full->assignment, answered, geometric);
        }
    } else {
        out.jaw = cfg.jaw == JawMode::upper ? Jaw::upper : Jaw::lower;
    }
    if (!full || full->assignment.codes.empty()) {
        out.assignment = with_non_tooth({}, out.non_tooth);
        return out;
    }
    const ConstraintContext ctx{out.jaw, midline_of(dossiers, out.central_incisors, apex), cfg.volume_ratio_limit};
    std::vector<FdiAssignment> attempts{full->assignment};
    attempts.insert(attempts.end(), corrections.begin(), corrections.end());
    auto best = pick_best(attempts, dossiers, ctx);
    out.correction_rounds = static_cast<int>(corrections.size());
    out.violations = best.violations;
    out.non_converged = !best.violations.empty();
    out.assignment = with_non_tooth(best.assignment, out.non_tooth);
    return out;
}

} // namespace tseg::agent
