#pragma once

#include "tseg/arch.hpp"
#include "tseg/image.hpp"
#include "tseg/mesh.hpp"
#include "tseg/render.hpp"
#include "tseg/seg.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tseg::agent {

inline constexpr std::string_view kPromptVersion = "v1";

/// The model answered, but with something the protocol does not allow (unknown ids,
/// non-adjacent anchors). Not retried.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Per-instance evidence handed to the model. Centroid is in occlusal-frame coordinates
/// (right, anterior, up).
struct ToothDossier {
    int id = 0;
    double arch_parameter = 0.0;
    Vec3 centroid = Vec3::Zero();
    std::array<double, 3> extents{}; ///< sorted descending
    double volume = 0.0;
    double residual = 0.0; ///< distance to the arch curve
    std::optional<int> predecessor;
    std::optional<int> successor;
};

/// Dossiers for every instance of a reordered labeling, in id order.
std::vector<ToothDossier> build_dossiers(const TriMesh& mesh, const FaceLabeling& reordered,
                                         const render::OcclusalFrame& frame, const arch::ArchCurve& curve,
                                         const arch::ArchOrdering& ordering);

enum class Role { system, user, assistant };
std::string to_string(Role role);
Role role_from_string(const std::string& s);

struct ChatTurn {
    Role role = Role::user;
    std::string text;
    std::vector<ImageRGB> images; ///< never set on assistant turns
};

inline constexpr int kNonTooth = -1;

/// instance id -> FDI code or kNonTooth.
struct FdiAssignment {
    std::map<int, int> codes;

    bool operator==(const FdiAssignment&) const = default;
};

std::string format_code(int code); ///< "36" or "NON_TOOTH"

enum class ViolationKind { duplicate_fdi, non_monotone_sequence, quadrant_inconsistency, volume_asymmetry };
std::string to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::vector<int> ids;
    std::string detail;
};

struct ConstraintContext {
    Jaw jaw = Jaw::lower;
    double midline = 0.0; ///< used when no central incisor is assigned
    double volume_ratio_limit = 2.0;
};

/// Which side of the midline (by arch parameter) a quadrant belongs to: true for the low side.
bool quadrant_on_low_side(int quadrant, Jaw jaw);
int quadrant_for_side(bool low_side, Jaw jaw);

std::vector<Violation> check_constraints(const FdiAssignment& assignment, std::span<const ToothDossier> dossiers,
                                         const ConstraintContext& ctx);

// ------------------------------------------------------------------ chat plumbing

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(std::span<const ChatTurn> history) = 0;
};

std::string encode_chat_request(std::span<const ChatTurn> history);
std::vector<ChatTurn> parse_chat_request(std::string_view body);
std::string encode_chat_response(std::string_view text);
std::string parse_chat_response(std::string_view body);

class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(seg::HttpClientConfig cfg);
    std::string complete(std::span<const ChatTurn> history) override;

private:
    seg::HttpClientConfig cfg_;
};

inline constexpr std::size_t kMaxImagesPerCall = 8;

/// One line per turn, appended as the conversation proceeds.
struct TranscriptEntry {
    std::string task;
    Role role = Role::user;
    std::string text;
    std::vector<std::string> image_hashes;
};

class Transcript {
public:
    void add(const std::string& task, const ChatTurn& turn);
    const std::vector<TranscriptEntry>& entries() const noexcept { return entries_; }
    std::string to_jsonl() const;
    static Transcript from_jsonl(std::string_view text);

private:
    std::vector<TranscriptEntry> entries_;
};

/// Sends the history; checks the image budget first and rejects empty replies.
std::string chat(ChatBackend& backend, std::span<const ChatTurn> history, std::size_t max_images = kMaxImagesPerCall);

// ------------------------------------------------------------------ prompts and parsing

std::string prompt_template(std::string_view name);
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

std::string format_dossier_table(std::span<const ToothDossier> dossiers);
std::vector<ToothDossier> parse_dossier_table(std::string_view text);

/// The body of the single ```json fence; throws ParseError otherwise.
std::string extract_json_block(std::string_view reply);

std::set<int> parse_non_tooth(std::string_view reply, const std::set<int>& known_ids);
std::vector<int> parse_central_incisors(std::string_view reply, const std::set<int>& known_ids);
struct FullArchReply {
    FdiAssignment assignment;
    std::optional<Jaw> jaw;
};
FullArchReply parse_assignment(std::string_view reply, const std::set<int>& known_ids, bool expect_jaw = false);

// ------------------------------------------------------------------ orchestration

enum class JawMode { upper, lower, autodetect };
JawMode jaw_mode_from_string(const std::string& s);
std::string to_string(JawMode mode);

struct AgentConfig {
    JawMode jaw = JawMode::lower;
    int max_correction_rounds = 3;
    double volume_ratio_limit = 2.0;
    std::size_t max_images = kMaxImagesPerCall;
};

struct AgentInputs {
    std::vector<ToothDossier> dossiers;
    std::vector<ImageRGB> images; ///< annotated views, attached to the first task only
    double arch_apex = 0.0;
    double crown_up_world_z = 1.0; ///< z component of the occlusal up axis in scan coordinates
};

struct AgentOutcome {
    std::set<int> non_tooth;
    std::vector<int> central_incisors;
    Jaw jaw = Jaw::lower;
    bool jaw_overridden = false; ///< auto mode answer disagreed with the crown direction
    FdiAssignment assignment;
    std::vector<Violation> violations;
    int correction_rounds = 0;
    bool non_converged = false;
};

class Agent {
public:
    Agent(ChatBackend& backend, AgentConfig cfg);

    AgentOutcome run(const AgentInputs& inputs);
    const Transcript& transcript() const noexcept { return transcript_; }

    // Individual rounds; each appends to the running conversation.
    std::set<int> round1_nontooth(const AgentInputs& inputs);
    std::vector<int> round2_central_incisors(const AgentInputs& inputs, const std::set<int>& non_tooth);
    FullArchReply round3_full_arch(const AgentInputs& inputs, const std::set<int>& non_tooth,
                                   const std::vector<int>& anchors, std::optional<Jaw> jaw);
    /// Loops check -> correct; returns the best assignment seen.
    FdiAssignment round4_correct(const AgentInputs& inputs, FdiAssignment assignment,
                                 const std::vector<int>& anchors, Jaw jaw, AgentOutcome& outcome);

private:
    std::string ask(const std::string& task, std::string text, std::vector<ImageRGB> images);
    template <class Parse>
    auto ask_parsed(const std::string& task, std::string text, std::vector<ImageRGB> images, Parse&& parse);

    ChatBackend& backend_;
    AgentConfig cfg_;
    std::vector<ChatTurn> history_;
    Transcript transcript_;
};

/// Midline used for side decisions: mean parameter of two anchors, else the arch apex.
double midline_of(std::span<const ToothDossier> dossiers, const std::vector<int>& anchors, double apex);

/// Re-derives the outcome from a persisted transcript alone.
AgentOutcome replay(const Transcript& transcript, const AgentConfig& cfg);

// ------------------------------------------------------------------ offline model

struct MockVlmConfig {
    double min_volume = 15.0;        ///< mm^3
    double min_extent = 3.0;         ///< mm
    double max_extent_factor = 3.0;  ///< times the median largest extent
    double max_residual = 3.0;       ///< mm
    double gap_factor = 1.6;         ///< width-normalized centroid gap that skips a position, times the median
    double split_factor = 0.65;      ///< arch-parameter step, times the median step, below which two instances are one split tooth
};

/// Rule-based stand-in for the vision-language model. Reads the same tables it is sent.
class MockVlm final : public ChatBackend {
public:
    explicit MockVlm(MockVlmConfig cfg = {}) : cfg_(cfg) {}
    std::string complete(std::span<const ChatTurn> history) override;

private:
    MockVlmConfig cfg_;
};

/// Answers every correction request with the assignment it was shown.
class StubbornVlm final : public ChatBackend {
public:
    explicit StubbornVlm(MockVlmConfig cfg = {}) : inner_(cfg) {}
    std::string complete(std::span<const ChatTurn> history) override;

private:
    MockVlm inner_;
};

} // namespace tseg::agent
