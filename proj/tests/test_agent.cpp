#include "support.hpp"

#include "tseg/agent.hpp"
#include "tseg/pipeline.hpp"

#include <gtest/gtest.h>

#include <deque>

using namespace tseg;
using namespace tseg::agent;

namespace {

/// Agent inputs built from a generated arch's true instances, plus the true assignment keyed
/// by reordered id.
struct ArchCase {
    synth::SynthArch arch;
    pipeline::ArchStage stage;
    AgentInputs inputs;
    FdiAssignment truth;
};

ArchCase arch_case(synth::SynthArchSpec spec)
{
    ArchCase c;
    c.arch = synth::generate_synthetic_arch(spec);
    const auto frame = render::estimate_occlusal_frame(c.arch.mesh);
    c.stage = pipeline::order_along_arch(c.arch.mesh, c.arch.instances, frame, {});
    c.inputs.dossiers = c.stage.dossiers;
    c.inputs.arch_apex = c.stage.curve.apex_x();
    c.inputs.crown_up_world_z = frame.up.z();
    for (const auto& t : c.arch.teeth) c.truth.codes[c.stage.ordering.new_id(t.instance)] = t.fdi;
    return c;
}

ArchCase arch_case(std::uint64_t seed, Jaw jaw = Jaw::lower, std::vector<int> missing = {})
{
    synth::SynthArchSpec spec;
    spec.seed = seed;
    spec.jaw = jaw;
    spec.sizes = synth::default_sizes(jaw);
    spec.missing = std::move(missing);
    return arch_case(spec);
}

/// Replies from a fixed script; records every request.
class ScriptedChat final : public ChatBackend {
public:
    explicit ScriptedChat(std::deque<std::string> replies) : replies_(std::move(replies)) {}
    std::string complete(std::span<const ChatTurn> history) override
    {
        requests.emplace_back(history.begin(), history.end());
        if (replies_.empty()) throw ServiceError("script exhausted");
        auto r = replies_.front();
        replies_.pop_front();
        return r;
    }
    std::vector<std::vector<ChatTurn>> requests;

private:
    std::deque<std::string> replies_;
};

/// Forwards to another backend and counts calls.
class CountingChat final : public ChatBackend {
public:
    explicit CountingChat(ChatBackend& inner) : inner_(inner) {}
    std::string complete(std::span<const ChatTurn> history) override
    {
        ++calls;
        return inner_.complete(history);
    }
    int calls = 0;

private:
    ChatBackend& inner_;
};

std::string fenced(const std::string& body) { return "```json\n" + body + "\n```"; }

ToothDossier dossier(int id, double param, double volume)
{
    ToothDossier d;
    d.id = id;
    d.arch_parameter = param;
    d.volume = volume;
    d.extents = {std::cbrt(volume), std::cbrt(volume), std::cbrt(volume)};
    return d;
}

/// Seven teeth per side of a lower arch, parameters -7..-1 and 1..7, with the clean assignment.
std::pair<std::vector<ToothDossier>, FdiAssignment> lower_line()
{
    std::vector<ToothDossier> ds;
    FdiAssignment a;
    int id = 1;
    for (int pos = 7; pos >= 1; --pos, ++id) {
        ds.push_back(dossier(id, -pos, 100.0 + pos));
        a.codes[id] = 30 + pos;
    }
    for (int pos = 1; pos <= 7; ++pos, ++id) {
        ds.push_back(dossier(id, pos, 100.0 + pos));
        a.codes[id] = 40 + pos;
    }
    return {ds, a};
}

bool has_kind(const std::vector<Violation>& v, ViolationKind k)
{
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == k; });
}

} // namespace

TEST(Dossiers, ExtentsSortedAndVolumeIsProduct)
{
    const auto c = arch_case(1);
    ASSERT_EQ(c.inputs.dossiers.size(), 14u);
    for (std::size_t i = 0; i < c.inputs.dossiers.size(); ++i) {
        const auto& d = c.inputs.dossiers[i];
        EXPECT_EQ(d.id, static_cast<int>(i) + 1);
        EXPECT_GE(d.extents[0], d.extents[1]);
        EXPECT_GE(d.extents[1], d.extents[2]);
        EXPECT_NEAR(d.volume, d.extents[0] * d.extents[1] * d.extents[2], 1e-9 * d.volume);
        EXPECT_EQ(d.predecessor.has_value(), i > 0);
        EXPECT_EQ(d.successor.has_value(), i + 1 < c.inputs.dossiers.size());
        if (i > 0) {
            EXPECT_GT(d.arch_parameter, c.inputs.dossiers[i - 1].arch_parameter);
        }
    }
}

TEST(Dossiers, TableRoundTrip)
{
    const auto c = arch_case(2);
    const auto back = parse_dossier_table(format_dossier_table(c.inputs.dossiers));
    ASSERT_EQ(back.size(), c.inputs.dossiers.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].id, c.inputs.dossiers[i].id);
        EXPECT_NEAR(back[i].arch_parameter, c.inputs.dossiers[i].arch_parameter, 1e-3);
        EXPECT_NEAR(back[i].volume, c.inputs.dossiers[i].volume, 1e-2);
        EXPECT_EQ(back[i].successor, c.inputs.dossiers[i].successor);
    }
}

TEST(ReplyParsing, JsonFence)
{
    EXPECT_EQ(extract_json_block("  ```json\n{\"a\": 1}\n```\n"), "\n{\"a\": 1}\n");
    EXPECT_THROW(extract_json_block("{\"a\": 1}"), ParseError);
    EXPECT_THROW(extract_json_block("```json\n{}\n"), ParseError);
    EXPECT_THROW(extract_json_block("```json\n{}\n```\n```json\n{}\n```"), ParseError);
    EXPECT_THROW(extract_json_block("   "), ParseError);
}

TEST(ReplyParsing, NonToothAndIncisors)
{
    const std::set<int> known{1, 2, 3};
    EXPECT_EQ(parse_non_tooth(fenced(R"({"non_tooth": [3, 1]})"), known), (std::set<int>{1, 3}));
    EXPECT_TRUE(parse_non_tooth(fenced(R"({"non_tooth": []})"), known).empty());
    EXPECT_THROW(parse_non_tooth(fenced(R"({"non_tooth": [9]})"), known), ProtocolError);
    EXPECT_THROW(parse_non_tooth(fenced(R"({"non_tooth": ["1"]})"), known), ParseError);
    EXPECT_THROW(parse_non_tooth(fenced(R"({"non_tooth": [], "note": 1})"), known), ParseError);

    EXPECT_EQ(parse_central_incisors(fenced(R"({"central_incisors": [3, 2]})"), known), (std::vector<int>{2, 3}));
    EXPECT_EQ(parse_central_incisors(fenced(R"({"central_incisors": [2]})"), known), std::vector<int>{2});
    EXPECT_THROW(parse_central_incisors(fenced(R"({"central_incisors": [1, 2, 3]})"), known), ParseError);
    EXPECT_THROW(parse_central_incisors(fenced(R"({"central_incisors": []})"), known), ParseError);
}

TEST(ReplyParsing, Assignment)
{
    const std::set<int> known{1, 2};
    const auto a = parse_assignment(fenced(R"({"assignment": {"1": "31", "2": "NON_TOOTH"}})"), known);
    EXPECT_EQ(a.assignment.codes, (std::map<int, int>{{1, 31}, {2, kNonTooth}}));
    EXPECT_FALSE(a.jaw);
    EXPECT_THROW(parse_assignment(fenced(R"({"assignment": {"1": "31"}})"), known), ParseError);
    EXPECT_THROW(parse_assignment(fenced(R"({"assignment": {"1": "31", "2": "19"}})"), known), ParseError);
    EXPECT_THROW(parse_assignment(fenced(R"({"assignment": {"1": "31", "2": "32", "5": "33"}})"), known), ProtocolError);
    EXPECT_THROW(parse_assignment(fenced(R"({"assignment": {"1": 31, "2": "32"}})"), known), ParseError);

    const auto j = parse_assignment(fenced(R"({"jaw": "upper", "assignment": {"1": "11", "2": "21"}})"), known, true);
    EXPECT_EQ(j.jaw, Jaw::upper);
    EXPECT_THROW(parse_assignment(fenced(R"({"assignment": {"1": "11", "2": "21"}})"), known, true), ParseError);
}

TEST(Chat, ImageLimitCheckedBeforeSending)
{
    ScriptedChat backend({"hello"});
    std::vector<ChatTurn> history{{Role::user, "look", std::vector<ImageRGB>(9, ImageRGB(4, 4))}};
    EXPECT_THROW(chat(backend, history), PreconditionError);
    EXPECT_TRUE(backend.requests.empty());
    history[0].images.resize(8);
    EXPECT_EQ(chat(backend, history), "hello");
}

TEST(Chat, EmptyReplyIsAnError)
{
    ScriptedChat backend({" \n"});
    const std::vector<ChatTurn> history{{Role::user, "hi", {}}};
    EXPECT_THROW(chat(backend, history), ServiceError);
}

TEST(Chat, WireFormatRoundTrip)
{
    ImageRGB img(2, 3);
    img.at(1, 2)[0] = 10;
    img.at(1, 2)[2] = 30;
    const std::vector<ChatTurn> history{{Role::system, "sys", {}}, {Role::user, "q", {img}}, {Role::assistant, "a\n\"x\"", {}}};
    const auto back = parse_chat_request(encode_chat_request(history));
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[1].role, Role::user);
    ASSERT_EQ(back[1].images.size(), 1u);
    EXPECT_EQ(back[1].images[0], img);
    EXPECT_EQ(back[2].text, "a\n\"x\"");
    EXPECT_EQ(parse_chat_response(encode_chat_response("reply ```json")), "reply ```json");
}

TEST(Agent, ReasksOnceThenSucceeds)
{
    const auto c = arch_case(1);
    ScriptedChat backend({"I think none of them.", fenced(R"({"non_tooth": []})")});
    Agent agent(backend, {});
    EXPECT_TRUE(agent.round1_nontooth(c.inputs).empty());
    ASSERT_EQ(backend.requests.size(), 2u);
    EXPECT_NE(backend.requests[1].back().text.find("retry"), std::string::npos);
}

TEST(Agent, SecondUnparseableReplyIsHardError)
{
    const auto c = arch_case(1);
    ScriptedChat backend({"no", "still no"});
    Agent agent(backend, {});
    EXPECT_THROW(agent.round1_nontooth(c.inputs), ParseError);
    EXPECT_EQ(backend.requests.size(), 2u);
}

TEST(Agent, UnknownIdIsNotRetried)
{
    const auto c = arch_case(1);
    ScriptedChat backend({fenced(R"({"non_tooth": [99]})")});
    Agent agent(backend, {});
    EXPECT_THROW(agent.round1_nontooth(c.inputs), ProtocolError);
    EXPECT_EQ(backend.requests.size(), 1u);
}

TEST(Agent, NonAdjacentIncisorsRejected)
{
    const auto c = arch_case(1);
    ScriptedChat backend({fenced(R"({"non_tooth": []})"), fenced(R"({"central_incisors": [3, 9]})")});
    Agent agent(backend, {});
    const auto nt = agent.round1_nontooth(c.inputs);
    EXPECT_THROW(agent.round2_central_incisors(c.inputs, nt), ProtocolError);
}

TEST(Agent, ImagesGoWithTheFirstTaskOnly)
{
    auto c = arch_case(1);
    c.inputs.images.assign(4, ImageRGB(8, 8));
    MockVlm vlm;
    Agent agent(vlm, {});
    agent.run(c.inputs);
    std::size_t with_images = 0;
    for (const auto& e : agent.transcript().entries()) with_images += !e.image_hashes.empty();
    EXPECT_EQ(with_images, 1u);
}

TEST(CheckConstraints, CleanAssignmentPasses)
{
    const auto [ds, a] = lower_line();
    EXPECT_TRUE(check_constraints(a, ds, {Jaw::lower, 0.0, 2.0}).empty());

    const auto c = arch_case(3);
    const double midline = midline_of(c.inputs.dossiers, {7, 8}, c.inputs.arch_apex);
    EXPECT_TRUE(check_constraints(c.truth, c.inputs.dossiers, {Jaw::lower, midline, 2.0}).empty());
}

TEST(CheckConstraints, SwappedNeighboursAreNonMonotone)
{
    const auto [ds, clean] = lower_line();
    for (int k = 1; k < 14; ++k) {
        if (k == 7) continue; // swapping across the midline is a quadrant error instead
        auto a = clean;
        std::swap(a.codes[k], a.codes[k + 1]);
        const auto v = check_constraints(a, ds, {Jaw::lower, 0.0, 2.0});
        EXPECT_TRUE(has_kind(v, ViolationKind::non_monotone_sequence)) << k;
        EXPECT_FALSE(has_kind(v, ViolationKind::duplicate_fdi));
    }
    auto across = clean;
    std::swap(across.codes[7], across.codes[8]);
    EXPECT_TRUE(has_kind(check_constraints(across, ds, {Jaw::lower, 0.0, 2.0}), ViolationKind::quadrant_inconsistency));
}

TEST(CheckConstraints, Duplicate)
{
    auto [ds, a] = lower_line();
    a.codes[1] = 36; // 37 -> 36, next to the real 36
    const auto v = check_constraints(a, ds, {Jaw::lower, 0.0, 2.0});
    ASSERT_TRUE(has_kind(v, ViolationKind::duplicate_fdi));
    const auto& dup = *std::find_if(v.begin(), v.end(), [](auto& x) { return x.kind == ViolationKind::duplicate_fdi; });
    EXPECT_EQ(dup.ids, (std::vector<int>{1, 2}));
}

TEST(CheckConstraints, QuadrantOnWrongSideOrWrongJaw)
{
    auto [ds, a] = lower_line();
    auto wrong_side = a;
    wrong_side.codes[1] = 47;
    wrong_side.codes[14] = 37;
    EXPECT_TRUE(has_kind(check_constraints(wrong_side, ds, {Jaw::lower, 0.0, 2.0}), ViolationKind::quadrant_inconsistency));
    auto wrong_jaw = a;
    wrong_jaw.codes[1] = 17;
    const auto v = check_constraints(wrong_jaw, ds, {Jaw::lower, 0.0, 2.0});
    EXPECT_TRUE(has_kind(v, ViolationKind::quadrant_inconsistency));
    FdiAssignment upper_ok;
    for (const auto& [id, code] : a.codes) upper_ok.codes[id] = (code / 10 == 3 ? 10 : 20) + code % 10;
    EXPECT_TRUE(check_constraints(upper_ok, ds, {Jaw::upper, 0.0, 2.0}).empty());
}

TEST(CheckConstraints, VolumeAsymmetry)
{
    auto [ds, a] = lower_line();
    // 36 is id 2, 46 is id 13
    ds[1].volume = 3.0 * ds[12].volume;
    auto v = check_constraints(a, ds, {Jaw::lower, 0.0, 2.0});
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::volume_asymmetry);
    EXPECT_EQ(v[0].ids, (std::vector<int>{2, 13}));
    ds[1].volume = 1.9 * ds[12].volume;
    EXPECT_TRUE(check_constraints(a, ds, {Jaw::lower, 0.0, 2.0}).empty());
    ds[12].volume = 3.0 * ds[1].volume;
    EXPECT_TRUE(has_kind(check_constraints(a, ds, {Jaw::lower, 0.0, 2.0}), ViolationKind::volume_asymmetry));
}

TEST(CheckConstraints, NonToothIgnored)
{
    auto [ds, a] = lower_line();
    a.codes[1] = kNonTooth;
    a.codes[2] = kNonTooth;
    EXPECT_TRUE(check_constraints(a, ds, {Jaw::lower, 0.0, 2.0}).empty());
}

TEST(MockVlm, CleanArchIdentifiedExactly)
{
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        for (Jaw jaw : {Jaw::lower, Jaw::upper}) {
            const auto c = arch_case(seed, jaw);
            MockVlm vlm;
            AgentConfig cfg;
            cfg.jaw = jaw == Jaw::lower ? JawMode::lower : JawMode::upper;
            Agent agent(vlm, cfg);
            const auto out = agent.run(c.inputs);
            EXPECT_TRUE(out.non_tooth.empty());
            ASSERT_EQ(out.central_incisors.size(), 2u);
            EXPECT_EQ(fdi_position(c.truth.codes.at(out.central_incisors[0])), 1);
            EXPECT_EQ(fdi_position(c.truth.codes.at(out.central_incisors[1])), 1);
            EXPECT_EQ(out.assignment, c.truth) << seed << " " << to_string(jaw);
            EXPECT_EQ(out.correction_rounds, 0);
            EXPECT_FALSE(out.non_converged);
        }
    }
}

TEST(MockVlm, AutoJawFollowsCrownDirection)
{
    for (Jaw jaw : {Jaw::lower, Jaw::upper}) {
        const auto c = arch_case(6, jaw);
        MockVlm vlm;
        AgentConfig cfg;
        cfg.jaw = JawMode::autodetect;
        Agent agent(vlm, cfg);
        const auto out = agent.run(c.inputs);
        EXPECT_EQ(out.jaw, jaw);
        EXPECT_FALSE(out.jaw_overridden);
        EXPECT_EQ(out.assignment, c.truth);
    }
}

TEST(MockVlm, WrongJawAnswerIsRemapped)
{
    const auto c = arch_case(6, Jaw::lower);
    std::string assignment = R"({"jaw": "upper", "assignment": {)";
    for (const auto& [id, code] : c.truth.codes) {
        const int upper = (fdi_quadrant(code) == 3 ? 10 : 20) + fdi_position(code);
        assignment += (id > 1 ? ", " : "") + std::string("\"") + std::to_string(id) + "\": \"" + std::to_string(upper) + "\"";
    }
    assignment += "}}";
    ScriptedChat backend({fenced(R"({"non_tooth": []})"), fenced(R"({"central_incisors": [7, 8]})"), fenced(assignment)});
    AgentConfig cfg;
    cfg.jaw = JawMode::autodetect;
    Agent agent(backend, cfg);
    const auto out = agent.run(c.inputs);
    EXPECT_EQ(out.jaw, Jaw::lower);
    EXPECT_TRUE(out.jaw_overridden);
    EXPECT_EQ(out.assignment, c.truth);
}

TEST(MockVlm, FlagsPapillaAndGumInstances)
{
    auto c = arch_case(1);
    auto& ds = c.inputs.dossiers;
    ToothDossier papilla = dossier(15, ds[6].arch_parameter + 0.3, 6.0);
    papilla.extents = {2.5, 2.0, 1.2};
    papilla.residual = 2.5;
    ToothDossier gum = dossier(16, ds[3].arch_parameter, 4000.0);
    gum.extents = {60.0, 20.0, 4.0};
    ds.push_back(papilla);
    ds.push_back(gum);
    MockVlm vlm;
    Agent agent(vlm, {});
    EXPECT_EQ(agent.round1_nontooth(c.inputs), (std::set<int>{15, 16}));
}

TEST(MockVlm, GapSkipsOnePosition)
{
    const auto c = arch_case(2, Jaw::lower, {35});
    MockVlm vlm;
    Agent agent(vlm, {});
    const auto out = agent.run(c.inputs);
    EXPECT_EQ(out.assignment, c.truth);
    std::set<int> codes;
    for (const auto& [id, code] : out.assignment.codes) codes.insert(code);
    EXPECT_FALSE(codes.count(35));
    EXPECT_TRUE(codes.count(36));
}

TEST(MockVlm, SingleCentralIncisor)
{
    const auto c = arch_case(3, Jaw::lower, {41});
    MockVlm vlm;
    Agent agent(vlm, {});
    const auto out = agent.run(c.inputs);
    ASSERT_EQ(out.central_incisors.size(), 1u);
    EXPECT_EQ(c.truth.codes.at(out.central_incisors[0]), 31);
    EXPECT_EQ(out.assignment, c.truth);
}

TEST(MockVlm, EverythingNonToothGivesEmptyAssignment)
{
    auto c = arch_case(1);
    for (auto& d : c.inputs.dossiers) d.volume = 1.0;
    MockVlm vlm;
    Agent agent(vlm, {});
    const auto out = agent.run(c.inputs);
    EXPECT_EQ(out.non_tooth.size(), c.inputs.dossiers.size());
    for (const auto& [id, code] : out.assignment.codes) EXPECT_EQ(code, kNonTooth);
    EXPECT_EQ(out.assignment.codes.size(), c.inputs.dossiers.size());
    EXPECT_FALSE(out.non_converged);
}

TEST(MockVlm, DeterministicAndOrderIndependent)
{
    const auto c = arch_case(4);
    MockVlm a, b;
    Agent x(a, {}), y(b, {});
    x.run(c.inputs);
    y.run(c.inputs);
    EXPECT_EQ(x.transcript().to_jsonl(), y.transcript().to_jsonl());

    // the same dossiers listed in shuffled order give the same anchors
    auto shuffled = c.inputs;
    std::mt19937_64 rng(9);
    std::shuffle(shuffled.dossiers.begin(), shuffled.dossiers.end(), rng);
    MockVlm v1, v2;
    Agent p(v1, {}), q(v2, {});
    const auto nt = p.round1_nontooth(c.inputs);
    EXPECT_EQ(q.round1_nontooth(shuffled), nt);
    EXPECT_EQ(p.round2_central_incisors(c.inputs, nt), q.round2_central_incisors(shuffled, nt));
}

TEST(Round4, DuplicateFixedInOneRound)
{
    const auto c = arch_case(1);
    auto broken = c.truth;
    // the outermost low-side tooth repeats its neighbour's code
    broken.codes[1] = broken.codes[2];
    MockVlm vlm;
    Agent agent(vlm, {});
    agent.round1_nontooth(c.inputs);
    AgentOutcome out;
    const auto fixed = agent.round4_correct(c.inputs, broken, {7, 8}, Jaw::lower, out);
    EXPECT_EQ(out.correction_rounds, 1);
    EXPECT_FALSE(out.non_converged);
    EXPECT_TRUE(out.violations.empty());
    EXPECT_EQ(fixed, c.truth);
}

TEST(Round4, CleanInputMakesNoCalls)
{
    const auto c = arch_case(1);
    MockVlm vlm;
    CountingChat counter(vlm);
    Agent agent(counter, {});
    AgentOutcome out;
    EXPECT_EQ(agent.round4_correct(c.inputs, c.truth, {7, 8}, Jaw::lower, out), c.truth);
    EXPECT_EQ(counter.calls, 0);
    EXPECT_EQ(out.correction_rounds, 0);
}

TEST(Round4, StubbornModelStopsAtMaxRounds)
{
    const auto c = arch_case(1);
    auto broken = c.truth;
    broken.codes[1] = broken.codes[2];
    for (int max_rounds : {0, 1, 3, 5}) {
        StubbornVlm vlm;
        CountingChat counter(vlm);
        AgentConfig cfg;
        cfg.max_correction_rounds = max_rounds;
        Agent agent(counter, cfg);
        agent.round1_nontooth(c.inputs);
        counter.calls = 0;
        AgentOutcome out;
        const auto best = agent.round4_correct(c.inputs, broken, {7, 8}, Jaw::lower, out);
        EXPECT_EQ(out.correction_rounds, max_rounds);
        EXPECT_EQ(counter.calls, max_rounds);
        EXPECT_TRUE(out.non_converged);
        EXPECT_FALSE(out.violations.empty());
        EXPECT_EQ(best, broken);
    }
}

TEST(Round4, PicksAttemptWithFewestViolations)
{
    const auto c = arch_case(1);
    auto broken = c.truth;
    broken.codes[1] = broken.codes[2];
    auto worse = broken;
    worse.codes[14] = worse.codes[13];
    auto to_reply = [](const FdiAssignment& a) {
        std::string s = R"({"assignment": {)";
        bool first = true;
        for (const auto& [id, code] : a.codes) {
            s += (first ? "" : ", ") + std::string("\"") + std::to_string(id) + "\": \"" + format_code(code) + "\"";
            first = false;
        }
        return fenced(s + "}}");
    };
    ScriptedChat backend({to_reply(worse), to_reply(worse), to_reply(worse)});
    Agent agent(backend, {});
    AgentOutcome out;
    EXPECT_EQ(agent.round4_correct(c.inputs, broken, {7, 8}, Jaw::lower, out), broken);
    EXPECT_TRUE(out.non_converged);
    EXPECT_EQ(out.correction_rounds, 3);
}

TEST(Transcript, ReplayReproducesOutcome)
{
    auto c = arch_case(5);
    // force a correction round so replay covers round 4 as well
    c.inputs.dossiers[0].volume *= 10.0;
    for (bool stubborn : {false, true}) {
        MockVlm mock;
        StubbornVlm stub;
        ChatBackend& backend = stubborn ? static_cast<ChatBackend&>(stub) : mock;
        Agent agent(backend, {});
        const auto live = agent.run(c.inputs);
        const auto text = agent.transcript().to_jsonl();
        const auto replayed = replay(Transcript::from_jsonl(text), {});
        EXPECT_EQ(replayed.non_tooth, live.non_tooth);
        EXPECT_EQ(replayed.central_incisors, live.central_incisors);
        EXPECT_EQ(replayed.assignment, live.assignment);
        EXPECT_EQ(replayed.correction_rounds, live.correction_rounds);
        EXPECT_EQ(replayed.non_converged, live.non_converged);
        EXPECT_EQ(Transcript::from_jsonl(text).to_jsonl(), text);
    }
    EXPECT_THROW(Transcript::from_jsonl("{not json}\n"), ParseError);
}

TEST(Prompts, TemplatesRender)
{
    for (const char* name : {"system", "round1_nontooth", "round2_central_incisors", "round3_full_arch", "round4_correct", "reask"})
        EXPECT_FALSE(prompt_template(name).empty()) << name;
    EXPECT_THROW(prompt_template("nope"), PreconditionError);
    EXPECT_EQ(render_template("a {{x}} b {{y}}", {{"x", "1"}, {"y", "2"}}), "a 1 b 2");
    EXPECT_THROW(render_template("a {{x}}", {}), PreconditionError);
    EXPECT_NE(prompt_template("round2_central_incisors").find("pixel"), std::string::npos);
}
