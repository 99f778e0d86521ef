#include "tseg/pipeline.hpp"

#include "tseg/parallel.hpp"
#include "tseg/random.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <thread>

namespace tseg::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

// ------------------------------------------------------------------ config

void validate(const PipelineConfig& cfg)
{
    if (cfg.views.width < 16 || cfg.views.height < 16) throw PreconditionError("views must be at least 16 px wide and high");
    if (cfg.views.per_view_perturbations < 0 || cfg.views.per_view_perturbations > render::kMaxPerturbations)
        throw PreconditionError("view_perturbations must be in 0.." + std::to_string(render::kMaxPerturbations));
    if (!(cfg.views.distance_scale > 0.0) || !(cfg.views.half_height_scale > 0.0))
        throw PreconditionError("view scales must be positive");
    fusion::validate(cfg.fusion);
    seg::validate(cfg.noise);
    if (!(cfg.arch_inlier_distance > 0.0)) throw PreconditionError("arch_inlier_distance must be positive");
    if (cfg.agent.max_correction_rounds < 0) throw PreconditionError("max_correction_rounds must be >= 0");
    if (!(cfg.agent.volume_ratio_limit > 1.0)) throw PreconditionError("volume_ratio_limit must exceed 1");
    if (cfg.agent.max_images > agent::kMaxImagesPerCall)
        throw PreconditionError("max_images must be at most " + std::to_string(agent::kMaxImagesPerCall));
    if (cfg.http_timeout_ms <= 0 || cfg.vlm_timeout_ms <= 0 || cfg.http_max_attempts < 1 || cfg.http_backoff_ms < 0)
        throw PreconditionError("http settings must be positive");
    if (cfg.max_in_flight < 1) throw PreconditionError("max_in_flight must be >= 1");
    if (cfg.seg_prompt.empty()) throw PreconditionError("seg_prompt must not be empty");
}

namespace {

template <class T>
void take(const json& j, const char* key, T& out)
{
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

} // namespace

PipelineConfig config_from_json(std::string_view text)
{
    static const std::set<std::string> kKeys = {
        "seed", "view_width", "view_height", "view_perturbations", "view_distance_scale", "view_half_height_scale",
        "tau_merge", "tau_contain", "min_pixel_fraction", "min_instance_area_mm2", "smoothing_iters",
        "arch_inlier_distance", "jaw", "max_correction_rounds", "volume_ratio_limit", "max_images",
        "mock_min_volume", "mock_min_extent", "mock_max_extent_factor", "mock_max_residual", "mock_gap_factor",
        "mock_split_factor", "p_split", "p_papilla", "p_gum", "boundary_jitter_px", "seg_prompt", "seg_endpoint",
        "vlm_endpoint", "http_timeout_ms", "vlm_timeout_ms", "http_max_attempts", "http_backoff_ms", "max_in_flight", "output_dir"};
    PipelineConfig cfg;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw ParseError("config must be a JSON object");
        for (const auto& [key, value] : j.items())
            if (!kKeys.count(key)) throw ParseError("unknown config key '" + key + "'");
        take(j, "seed", cfg.seed);
        take(j, "view_width", cfg.views.width);
        take(j, "view_height", cfg.views.height);
        take(j, "view_perturbations", cfg.views.per_view_perturbations);
        take(j, "view_distance_scale", cfg.views.distance_scale);
        take(j, "view_half_height_scale", cfg.views.half_height_scale);
        take(j, "tau_merge", cfg.fusion.tau_merge);
        take(j, "tau_contain", cfg.fusion.tau_contain);
        take(j, "min_pixel_fraction", cfg.fusion.min_pixel_fraction);
        take(j, "min_instance_area_mm2", cfg.fusion.min_instance_area_mm2);
        take(j, "smoothing_iters", cfg.fusion.smoothing_iters);
        take(j, "arch_inlier_distance", cfg.arch_inlier_distance);
        if (j.contains("jaw")) cfg.agent.jaw = agent::jaw_mode_from_string(j.at("jaw").get<std::string>());
        take(j, "max_correction_rounds", cfg.agent.max_correction_rounds);
        take(j, "volume_ratio_limit", cfg.agent.volume_ratio_limit);
        take(j, "max_images", cfg.agent.max_images);
        take(j, "mock_min_volume", cfg.mock_vlm.min_volume);
        take(j, "mock_min_extent", cfg.mock_vlm.min_extent);
        take(j, "mock_max_extent_factor", cfg.mock_vlm.max_extent_factor);
        take(j, "mock_max_residual", cfg.mock_vlm.max_residual);
        take(j, "mock_gap_factor", cfg.mock_vlm.gap_factor);
        take(j, "mock_split_factor", cfg.mock_vlm.split_factor);
        take(j, "p_split", cfg.noise.p_split);
        take(j, "p_papilla", cfg.noise.p_papilla);
        take(j, "p_gum", cfg.noise.p_gum);
        take(j, "boundary_jitter_px", cfg.noise.boundary_jitter_px);
        take(j, "seg_prompt", cfg.seg_prompt);
        take(j, "seg_endpoint", cfg.seg_endpoint);
        take(j, "vlm_endpoint", cfg.vlm_endpoint);
        take(j, "http_timeout_ms", cfg.http_timeout_ms);
        take(j, "vlm_timeout_ms", cfg.vlm_timeout_ms);
        take(j, "http_max_attempts", cfg.http_max_attempts);
        take(j, "http_backoff_ms", cfg.http_backoff_ms);
        take(j, "max_in_flight", cfg.max_in_flight);
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad config: ") + e.what());
    }
    cfg.noise.seed = noise_seed(cfg);
    validate(cfg);
    return cfg;
}

std::string config_to_json(const PipelineConfig& cfg)
{
    ordered_json j;
    j["seed"] = cfg.seed;
    j["view_width"] = cfg.views.width;
    j["view_height"] = cfg.views.height;
    j["view_perturbations"] = cfg.views.per_view_perturbations;
    j["view_distance_scale"] = cfg.views.distance_scale;
    j["view_half_height_scale"] = cfg.views.half_height_scale;
    j["tau_merge"] = cfg.fusion.tau_merge;
    j["tau_contain"] = cfg.fusion.tau_contain;
    j["min_pixel_fraction"] = cfg.fusion.min_pixel_fraction;
    j["min_instance_area_mm2"] = cfg.fusion.min_instance_area_mm2;
    j["smoothing_iters"] = cfg.fusion.smoothing_iters;
    j["arch_inlier_distance"] = cfg.arch_inlier_distance;
    j["jaw"] = agent::to_string(cfg.agent.jaw);
    j["max_correction_rounds"] = cfg.agent.max_correction_rounds;
    j["volume_ratio_limit"] = cfg.agent.volume_ratio_limit;
    j["max_images"] = cfg.agent.max_images;
    j["mock_min_volume"] = cfg.mock_vlm.min_volume;
    j["mock_min_extent"] = cfg.mock_vlm.min_extent;
    j["mock_max_extent_factor"] = cfg.mock_vlm.max_extent_factor;
    j["mock_max_residual"] = cfg.mock_vlm.max_residual;
    j["mock_gap_factor"] = cfg.mock_vlm.gap_factor;
    j["mock_split_factor"] = cfg.mock_vlm.split_factor;
    j["p_split"] = cfg.noise.p_split;
    j["p_papilla"] = cfg.noise.p_papilla;
    j["p_gum"] = cfg.noise.p_gum;
    j["boundary_jitter_px"] = cfg.noise.boundary_jitter_px;
    j["seg_prompt"] = cfg.seg_prompt;
    j["seg_endpoint"] = cfg.seg_endpoint;
    j["vlm_endpoint"] = cfg.vlm_endpoint;
    j["http_timeout_ms"] = cfg.http_timeout_ms;
    j["vlm_timeout_ms"] = cfg.vlm_timeout_ms;
    j["http_max_attempts"] = cfg.http_max_attempts;
    j["http_backoff_ms"] = cfg.http_backoff_ms;
    j["max_in_flight"] = cfg.max_in_flight;
    j["output_dir"] = cfg.output_dir.string();
    return j.dump(2) + "\n";
}

PipelineConfig load_config(const std::filesystem::path& path) { return config_from_json(read_file(path)); }

namespace {

seg::HttpClientConfig client_config(const PipelineConfig& cfg, const std::string& endpoint, int timeout_ms)
{
    seg::HttpClientConfig c;
    c.endpoint = endpoint;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    c.max_attempts = cfg.http_max_attempts;
    c.backoff = std::chrono::milliseconds(cfg.http_backoff_ms);
    return c;
}

} // namespace

seg::HttpClientConfig seg_client_config(const PipelineConfig& cfg)
{
    return client_config(cfg, cfg.seg_endpoint, cfg.http_timeout_ms);
}

seg::HttpClientConfig vlm_client_config(const PipelineConfig& cfg)
{
    return client_config(cfg, cfg.vlm_endpoint, cfg.vlm_timeout_ms);
}

std::uint64_t noise_seed(const PipelineConfig& cfg) { return derive_seed(cfg.seed, "seg_noise"); }

StageError::StageError(std::string stage, const std::string& message)
    : Error("[" + stage + "] " + message), stage_(std::move(stage))
{
}

namespace {

template <class Fn>
auto stage(const char* name, Fn&& fn)
{
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

} // namespace

// ------------------------------------------------------------------ stages

std::vector<render::RenderOutput> render_views(const TriMesh& mesh, const render::OcclusalFrame& frame,
                                               const PipelineConfig& cfg)
{
    const auto cameras = render::make_view_set(frame, cfg.views);
    const auto curvature = normalize_percentile(vertex_curvature(mesh));
    std::vector<render::RenderOutput> out(cameras.size());
    parallel_for(cameras.size(), cfg.max_in_flight,
                 [&](std::size_t i) { out[i] = render::rasterize(mesh, cameras[i], {}, curvature); });
    return out;
}

std::vector<fusion::FaceMask> segment_views(seg::SegBackend& backend, const TriMesh& mesh,
                                            std::span<const render::RenderOutput> renders, const PipelineConfig& cfg)
{
    const auto areas = face_geometry(mesh).areas;
    std::vector<std::vector<fusion::FaceMask>> per_view(renders.size());
    parallel_for(renders.size(), cfg.max_in_flight, [&](std::size_t i) {
        const auto& r = renders[i];
        const auto proposals = seg::segment_image(backend, r.rgb, r.camera.view_tag, cfg.seg_prompt);
        const fusion::ViewIndex index(r);
        for (const auto& p : proposals) {
            auto m = fusion::backproject(p, index, areas, cfg.fusion);
            if (!m.empty()) per_view[i].push_back(std::move(m));
        }
    });
    std::vector<fusion::FaceMask> masks;
    for (auto& v : per_view)
        for (auto& m : v) masks.push_back(std::move(m));
    return masks;
}

FaceLabeling fuse_masks(std::span<const fusion::FaceMask> masks, const TriMesh& mesh, const PipelineConfig& cfg)
{
    const auto areas = face_geometry(mesh).areas;
    const auto merged = fusion::merge_masks(masks, areas, mesh.face_count(), cfg.fusion);
    return fusion::cleanup(merged, mesh, cfg.fusion);
}

ArchStage order_along_arch(const TriMesh& mesh, const FaceLabeling& fused, const render::OcclusalFrame& frame,
                           const PipelineConfig& cfg)
{
    ArchStage st;
    const auto ids = instance_ids(fused);
    if (ids.empty()) {
        st.instances = fused;
        return st;
    }
    const auto geom = face_geometry(mesh);
    std::vector<Vec3> centroids;
    for (int id : ids) centroids.push_back(instance_centroid(geom, fused, id));
    const auto points = arch::project_centroids(frame, centroids);
    st.curve = arch::fit_arch_robust(points, cfg.arch_inlier_distance);
    std::map<int, double> params;
    for (std::size_t i = 0; i < ids.size(); ++i) params[ids[i]] = arch::curve_parameter(st.curve, points[i]);
    std::tie(st.instances, st.ordering) = arch::reorder_instances(fused, params);
    st.dossiers = agent::build_dossiers(mesh, st.instances, frame, st.curve, st.ordering);
    return st;
}

std::vector<ImageRGB> annotate_views(std::span<const render::RenderOutput> renders, const FaceLabeling& instances)
{
    std::vector<ImageRGB> out;
    for (const auto& r : renders) out.push_back(render::overlay_instance_ids(r, instances).image);
    return out;
}

FaceLabeling fdi_faces(const FaceLabeling& instances, const agent::FdiAssignment& assignment)
{
    FaceLabeling out{std::vector<int>(instances.size(), 0)};
    for (std::size_t f = 0; f < instances.size(); ++f) {
        auto it = assignment.codes.find(instances[f]);
        if (it != assignment.codes.end() && it->second != agent::kNonTooth) out[f] = it->second;
    }
    return out;
}

// ------------------------------------------------------------------ whole run

namespace {

/// Base views only, up to the image budget.
std::vector<ImageRGB> images_for_agent(const std::vector<ImageRGB>& annotated, const PipelineConfig& cfg)
{
    std::vector<ImageRGB> out;
    const std::size_t stride = static_cast<std::size_t>(cfg.views.per_view_perturbations) + 1;
    for (std::size_t i = 0; i < annotated.size() && out.size() < cfg.agent.max_images; i += stride)
        out.push_back(annotated[i]);
    return out;
}

} // namespace

RunResult identify(const TriMesh& mesh, const FaceLabeling& fused, std::vector<render::RenderOutput> renders,
                   const PipelineConfig& cfg, agent::ChatBackend& chat, const std::optional<FaceLabeling>& gt_fdi)
{
    RunResult res;
    res.frame = stage("frame", [&] { return render::estimate_occlusal_frame(mesh); });
    res.renders = std::move(renders);
    res.fused = fused;
    res.arch = stage("arch", [&] { return order_along_arch(mesh, fused, res.frame, cfg); });
    res.annotated = stage("render", [&] { return annotate_views(res.renders, res.arch.instances); });

    stage("agent", [&] {
        if (res.arch.dossiers.empty()) return 0;
        agent::AgentInputs in;
        in.dossiers = res.arch.dossiers;
        in.images = images_for_agent(res.annotated, cfg);
        in.arch_apex = res.arch.curve.apex_x();
        in.crown_up_world_z = res.frame.up.z();
        agent::Agent agent(chat, cfg.agent);
        try {
            res.outcome = agent.run(in);
        } catch (...) {
            res.transcript = agent.transcript();
            throw;
        }
        res.transcript = agent.transcript();
        return 0;
    });
    res.fdi = fdi_faces(res.arch.instances, res.outcome.assignment);
    if (gt_fdi) {
        res.metrics = stage("metrics", [&] {
            if (gt_fdi->size() != mesh.face_count()) throw PreconditionError("ground truth does not match the mesh");
            return metrics::evaluate_case("run", mesh, *gt_fdi, res.fdi);
        });
    }
    return res;
}

RunResult run_pipeline(const TriMesh& mesh, const PipelineConfig& cfg, Services services,
                       const std::optional<FaceLabeling>& gt_fdi)
{
    stage("config", [&] {
        validate(cfg);
        return 0;
    });
    if (mesh.face_count() == 0) throw StageError("load", "mesh has no faces");
    const auto frame = stage("frame", [&] { return render::estimate_occlusal_frame(mesh); });
    auto renders = stage("render", [&] { return render_views(mesh, frame, cfg); });
    const auto masks = stage("segment", [&] { return segment_views(services.seg, mesh, renders, cfg); });
    const auto fused = stage("fuse", [&] { return fuse_masks(masks, mesh, cfg); });
    return identify(mesh, fused, std::move(renders), cfg, services.chat, gt_fdi);
}

namespace {

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

} // namespace

std::string report_json(const RunResult& r, const PipelineConfig& cfg)
{
    ordered_json j;
    j["prompt_version"] = std::string(agent::kPromptVersion);
    j["seed"] = cfg.seed;
    j["exit_code"] = r.exit_code();
    j["frame"] = {{"origin", vec_json(r.frame.origin)},
                  {"right", vec_json(r.frame.right)},
                  {"anterior", vec_json(r.frame.anterior)},
                  {"up", vec_json(r.frame.up)},
                  {"planar", r.frame.planar}};
    j["views"] = r.renders.size();
    j["instances"] = instance_ids(r.arch.instances).size();
    const auto& c = r.arch.curve;
    j["arch"] = {{"a", c.a},
                 {"b", c.b},
                 {"c", c.c},
                 {"residual_mm", c.residual_rms},
                 {"x_min", c.x_min},
                 {"x_max", c.x_max},
                 {"apex_x", c.apex_x()},
                 {"line_fallback", c.line_fallback}};
    ordered_json order = ordered_json::array();
    for (const auto& e : r.arch.ordering.entries)
        order.push_back(ordered_json::array({e.old_id, e.new_id, e.parameter}));
    j["order"] = order;
    j["jaw_mode"] = agent::to_string(cfg.agent.jaw);
    j["jaw"] = to_string(r.outcome.jaw);
    j["jaw_overridden"] = r.outcome.jaw_overridden;
    j["non_tooth"] = r.outcome.non_tooth;
    j["central_incisors"] = r.outcome.central_incisors;
    ordered_json assignment = ordered_json::object();
    for (const auto& [id, code] : r.outcome.assignment.codes) assignment[std::to_string(id)] = agent::format_code(code);
    j["assignment"] = assignment;
    ordered_json violations = ordered_json::array();
    for (const auto& v : r.outcome.violations)
        violations.push_back({{"kind", agent::to_string(v.kind)}, {"ids", v.ids}, {"detail", v.detail}});
    j["violations"] = violations;
    j["correction_rounds"] = r.outcome.correction_rounds;
    j["non_converged"] = r.outcome.non_converged;
    if (r.metrics)
        j["metrics"] = {{"tla", r.metrics->tla}, {"tsa", r.metrics->tsa}, {"tir", r.metrics->tir}, {"miou", r.metrics->miou}};
    else
        j["metrics"] = nullptr;
    return j.dump(2) + "\n";
}

void write_outputs(const std::filesystem::path& dir, const TriMesh& mesh, const RunResult& r, const PipelineConfig& cfg)
{
    stage("output", [&] {
        std::filesystem::create_directories(dir / "views");
        MeshAttributes attrs;
        attrs.face_label = r.arch.instances.labels;
        attrs.face_fdi = r.fdi.labels;
        attrs.vertex_fdi = fdi_face_to_vertex(mesh, r.fdi).labels;
        save_ply(dir / "labeled.ply", mesh, attrs);
        for (std::size_t i = 0; i < r.annotated.size(); ++i)
            write_png(dir / "views" / (r.renders[i].camera.view_tag + ".png"), r.annotated[i]);
        write_file(dir / "transcript.jsonl", r.transcript.to_jsonl());
        write_file(dir / "report.json", report_json(r, cfg));
        return 0;
    });
}

GroundTruth ground_truth_of(const LoadedMesh& loaded)
{
    GroundTruth gt;
    const auto& a = loaded.attributes;
    if (a.face_label) gt.instances = FaceLabeling{*a.face_label};
    if (a.face_fdi)
        gt.fdi = FaceLabeling{*a.face_fdi};
    else if (a.vertex_fdi)
        gt.fdi = fdi_vertex_to_face(loaded.mesh, VertexLabeling{*a.vertex_fdi});
    return gt;
}

// ------------------------------------------------------------------ view bundles

void save_views(const std::filesystem::path& dir, std::span<const render::RenderOutput> renders)
{
    std::filesystem::create_directories(dir);
    ordered_json cams = ordered_json::array();
    for (const auto& r : renders) {
        const auto& c = r.camera;
        cams.push_back({{"view_tag", c.view_tag},
                        {"eye", vec_json(c.eye)},
                        {"look_at", vec_json(c.look_at)},
                        {"up_hint", vec_json(c.up_hint)},
                        {"half_height", c.half_height},
                        {"width", c.width},
                        {"height", c.height}});
        write_png(dir / (c.view_tag + ".png"), r.rgb);
        write_file(dir / (c.view_tag + ".fid"), encode_face_ids(r.width(), r.height(), r.face_id));
    }
    write_file(dir / "cameras.json", cams.dump(2) + "\n");
}

std::vector<render::RenderOutput> load_views(const std::filesystem::path& dir)
{
    std::vector<render::RenderOutput> out;
    try {
        const auto cams = json::parse(read_file(dir / "cameras.json"));
        auto vec = [](const json& a) { return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()); };
        for (const auto& c : cams) {
            render::RenderOutput r;
            r.camera.view_tag = c.at("view_tag").get<std::string>();
            r.camera.eye = vec(c.at("eye"));
            r.camera.look_at = vec(c.at("look_at"));
            r.camera.up_hint = vec(c.at("up_hint"));
            r.camera.half_height = c.at("half_height").get<double>();
            r.camera.width = c.at("width").get<int>();
            r.camera.height = c.at("height").get<int>();
            r.rgb = decode_png(read_file(dir / (r.camera.view_tag + ".png")));
            auto fid = decode_face_ids(read_file(dir / (r.camera.view_tag + ".fid")));
            if (fid.width != r.rgb.width || fid.height != r.rgb.height || r.rgb.width != r.camera.width ||
                r.rgb.height != r.camera.height)
                throw ParseError("view '" + r.camera.view_tag + "' has inconsistent sizes");
            r.face_id = std::move(fid.ids);
            out.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad cameras.json: ") + e.what());
    }
    return out;
}

// ------------------------------------------------------------------ mock services

MockServices::MockServices(const TriMesh& mesh, FaceLabeling gt_instances, const PipelineConfig& cfg)
    : seg_(std::move(gt_instances),
           [&] {
               auto n = cfg.noise;
               n.seed = noise_seed(cfg);
               return n;
           }()),
      vlm_(cfg.mock_vlm)
{
    const auto frame = render::estimate_occlusal_frame(mesh);
    for (const auto& r : render_views(mesh, frame, cfg)) seg_.register_view(r);
}

struct HttpMockServer::Impl {
    httplib::Server server;
    std::thread thread;
};

HttpMockServer::HttpMockServer(seg::MockSegService* seg, agent::ChatBackend* chat, int port, std::size_t workers)
    : impl_(std::make_unique<Impl>())
{
    auto& s = impl_->server;
    s.new_task_queue = [workers] { return new httplib::ThreadPool(std::max<std::size_t>(1, workers)); };
    s.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
    if (seg) {
        s.Post("/v1/segment", [seg](const httplib::Request& req, httplib::Response& res) {
            auto [status, body] = seg->handle(req.body);
            res.status = status;
            res.set_content(body, "application/json");
        });
    }
    if (chat) {
        s.Post("/v1/chat", [chat](const httplib::Request& req, httplib::Response& res) {
            try {
                const auto history = agent::parse_chat_request(req.body);
                res.set_content(agent::encode_chat_response(chat->complete(history)), "application/json");
            } catch (const ParseError& e) {
                res.status = 400;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 422;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            }
        });
    }
    if (port == 0) {
        port_ = s.bind_to_any_port("127.0.0.1");
    } else if (s.bind_to_port("127.0.0.1", port)) {
        port_ = port;
    } else {
        port_ = -1;
    }
    if (port_ <= 0) throw ServiceError("could not bind 127.0.0.1:" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    s.wait_until_ready();
}

HttpMockServer::~HttpMockServer() { stop(); }

void HttpMockServer::stop()
{
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string HttpMockServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

// ------------------------------------------------------------------ evaluation

namespace {

std::optional<std::filesystem::path> case_file(const std::filesystem::path& root, const std::string& id,
                                               std::initializer_list<const char*> names)
{
    for (const char* n : names)
        if (auto p = root / id / n; std::filesystem::is_regular_file(p)) return p;
    if (auto p = root / (id + ".ply"); std::filesystem::is_regular_file(p)) return p;
    return std::nullopt;
}

} // namespace

metrics::MetricsReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                     const metrics::TlaOptions& opts)
{
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(gt_dir)) {
        if (e.is_directory() && std::filesystem::is_regular_file(e.path() / "mesh.ply"))
            ids.push_back(e.path().filename().string());
        else if (e.is_regular_file() && e.path().extension() == ".ply")
            ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw PreconditionError("no cases under " + gt_dir.string());

    std::vector<metrics::CaseMetrics> cases;
    for (const auto& id : ids) {
        const auto gt_path = case_file(gt_dir, id, {"mesh.ply"});
        const auto pred_path = case_file(pred_dir, id, {"labeled.ply"});
        if (!pred_path) throw PreconditionError("case '" + id + "' has no prediction under " + pred_dir.string());
        const auto gt = load_mesh(*gt_path);
        const auto pred = load_mesh(*pred_path);
        const auto gt_fdi = ground_truth_of(gt).fdi;
        const auto pred_fdi = ground_truth_of(pred).fdi;
        if (!gt_fdi) throw ParseError("case '" + id + "': ground truth carries no fdi labels");
        if (!pred_fdi) throw ParseError("case '" + id + "': prediction carries no fdi labels");
        if (gt.mesh.face_count() != pred.mesh.face_count())
            throw PreconditionError("case '" + id + "': prediction and ground truth meshes differ");
        cases.push_back(metrics::evaluate_case(id, gt.mesh, *gt_fdi, *pred_fdi, opts));
    }
    return metrics::summarize(std::move(cases));
}

} // namespace tseg::pipeline
