#pragma once

#include "tseg/agent.hpp"
#include "tseg/arch.hpp"
#include "tseg/fusion.hpp"
#include "tseg/mesh_io.hpp"
#include "tseg/metrics.hpp"
#include "tseg/render.hpp"
#include "tseg/seg.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tseg::pipeline {

/// Every tunable of a run. Serialized as one flat JSON object; absent keys keep their defaults.
struct PipelineConfig {
    std::uint64_t seed = 1;
    render::ViewConfig views;
    fusion::FusionConfig fusion;
    double arch_inlier_distance = 3.0; ///< mm, for the robust arch refit
    agent::AgentConfig agent;
    agent::MockVlmConfig mock_vlm;
    seg::SegNoiseConfig noise; ///< mock mode only; its seed is derived from `seed`
    std::string seg_prompt = "tooth";
    std::string seg_endpoint;
    std::string vlm_endpoint;
    int http_timeout_ms = 60'000; ///< segmentation requests
    int vlm_timeout_ms = 120'000;
    int http_max_attempts = 3;
    int http_backoff_ms = 250;
    std::size_t max_in_flight = 4;
    std::filesystem::path output_dir;
};

void validate(const PipelineConfig& cfg);
PipelineConfig config_from_json(std::string_view text);
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

/// HTTP client settings for the segmentation and chat endpoints.
seg::HttpClientConfig seg_client_config(const PipelineConfig& cfg);
seg::HttpClientConfig vlm_client_config(const PipelineConfig& cfg);

/// Seed handed to the mock segmenter.
std::uint64_t noise_seed(const PipelineConfig& cfg);

/// Hard failure of one stage; what() starts with "[stage] ".
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message);
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

// ------------------------------------------------------------------ stages

std::vector<render::RenderOutput> render_views(const TriMesh& mesh, const render::OcclusalFrame& frame,
                                               const PipelineConfig& cfg);

/// Segments every view (concurrently, at most max_in_flight) and back-projects the proposals.
/// Masks come back in view order, then proposal order.
std::vector<fusion::FaceMask> segment_views(seg::SegBackend& backend, const TriMesh& mesh,
                                            std::span<const render::RenderOutput> renders, const PipelineConfig& cfg);

/// Merge followed by cleanup.
FaceLabeling fuse_masks(std::span<const fusion::FaceMask> masks, const TriMesh& mesh, const PipelineConfig& cfg);

struct ArchStage {
    arch::ArchCurve curve;
    arch::ArchOrdering ordering;
    FaceLabeling instances; ///< reordered 1..K along the arch
    std::vector<agent::ToothDossier> dossiers;
};

ArchStage order_along_arch(const TriMesh& mesh, const FaceLabeling& fused, const render::OcclusalFrame& frame,
                           const PipelineConfig& cfg);

/// Annotated renders: instance ids drawn over each view.
std::vector<ImageRGB> annotate_views(std::span<const render::RenderOutput> renders, const FaceLabeling& instances);

/// Per-face FDI code (0 for gingiva and NON_TOOTH instances).
FaceLabeling fdi_faces(const FaceLabeling& instances, const agent::FdiAssignment& assignment);

// ------------------------------------------------------------------ whole run

struct Services {
    seg::SegBackend& seg;
    agent::ChatBackend& chat;
};

struct RunResult {
    render::OcclusalFrame frame;
    std::vector<render::RenderOutput> renders;
    std::vector<ImageRGB> annotated;
    FaceLabeling fused;
    ArchStage arch;
    agent::AgentOutcome outcome;
    agent::Transcript transcript;
    FaceLabeling fdi;
    std::optional<metrics::CaseMetrics> metrics; ///< when ground truth was supplied

    int exit_code() const noexcept { return outcome.non_converged ? 2 : 0; }
};

/// Runs every stage. `gt_fdi` (per-face codes) only feeds the report.
RunResult run_pipeline(const TriMesh& mesh, const PipelineConfig& cfg, Services services,
                       const std::optional<FaceLabeling>& gt_fdi = std::nullopt);

/// Identification stages only, starting from a fused labeling.
RunResult identify(const TriMesh& mesh, const FaceLabeling& fused, std::vector<render::RenderOutput> renders,
                   const PipelineConfig& cfg, agent::ChatBackend& chat,
                   const std::optional<FaceLabeling>& gt_fdi = std::nullopt);

std::string report_json(const RunResult& result, const PipelineConfig& cfg);

/// labeled.ply, views/<tag>.png, transcript.jsonl, report.json.
void write_outputs(const std::filesystem::path& dir, const TriMesh& mesh, const RunResult& result,
                   const PipelineConfig& cfg);

/// Ground-truth instance and FDI labels carried by a mesh file, if any.
struct GroundTruth {
    std::optional<FaceLabeling> instances;
    std::optional<FaceLabeling> fdi;
};
GroundTruth ground_truth_of(const LoadedMesh& loaded);

// ------------------------------------------------------------------ view bundles on disk

/// views/<tag>.png (plain render), views/<tag>.fid, views/cameras.json
void save_views(const std::filesystem::path& dir, std::span<const render::RenderOutput> renders);
std::vector<render::RenderOutput> load_views(const std::filesystem::path& dir);

// ------------------------------------------------------------------ mock services

/// In-process mock segmenter and chat model for one mesh, usable directly or over HTTP.
class MockServices {
public:
    /// Renders the mesh with the config's view set and registers every view.
    MockServices(const TriMesh& mesh, FaceLabeling gt_instances, const PipelineConfig& cfg);

    seg::MockSegService& seg_service() noexcept { return seg_; }
    agent::MockVlm& vlm() noexcept { return vlm_; }

private:
    seg::MockSegService seg_;
    agent::MockVlm vlm_;
};

/// Serves /v1/segment, /v1/chat and /healthz on 127.0.0.1 from a background thread pool of
/// `workers` threads. Port 0 picks a free port. Stops on destruction.
class HttpMockServer {
public:
    HttpMockServer(seg::MockSegService* seg, agent::ChatBackend* chat, int port, std::size_t workers = 4);
    ~HttpMockServer();
    HttpMockServer(const HttpMockServer&) = delete;
    HttpMockServer& operator=(const HttpMockServer&) = delete;

    int port() const noexcept { return port_; }
    std::string endpoint() const;

    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

// ------------------------------------------------------------------ evaluation

/// Pairs <pred_dir>/<id>/labeled.ply with <gt_dir>/<id>/mesh.ply (or <id>.ply in either).
metrics::MetricsReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                     const metrics::TlaOptions& opts = {});

} // namespace tseg::pipeline
