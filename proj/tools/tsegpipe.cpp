#include "tseg/pipeline.hpp"
#include "tseg/synth.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <thread>

namespace fs = std::filesystem;
using namespace tseg;
using pipeline::PipelineConfig;

namespace {

std::atomic<bool> g_stop{false};

PipelineConfig config_at(const std::string& path)
{
    auto cfg = path.empty() ? PipelineConfig{} : pipeline::load_config(path);
    if (const char* e = std::getenv("SEG_ENDPOINT"); e && *e) cfg.seg_endpoint = e;
    if (const char* e = std::getenv("VLM_ENDPOINT"); e && *e) cfg.vlm_endpoint = e;
    return cfg;
}

LoadedMesh load_input(const std::string& path)
{
    try {
        return load_mesh(path);
    } catch (const std::exception& e) {
        throw pipeline::StageError("load", e.what());
    }
}

FaceLabeling gt_instances_of(const LoadedMesh& loaded)
{
    auto gt = pipeline::ground_truth_of(loaded).instances;
    if (!gt) throw pipeline::StageError("load", "--mock needs a mesh with per-face `label` ground truth");
    return *gt;
}

/// Either the in-process mocks or HTTP clients for the configured endpoints.
class Backends {
public:
    Backends(const LoadedMesh& loaded, const PipelineConfig& cfg, bool mock)
    {
        if (mock) {
            mock_ = std::make_unique<pipeline::MockServices>(loaded.mesh, gt_instances_of(loaded), cfg);
            seg_ = std::make_unique<seg::InProcessSegBackend>(mock_->seg_service());
        } else {
            seg_ = std::make_unique<seg::HttpSegBackend>(pipeline::seg_client_config(cfg));
            chat_ = std::make_unique<agent::HttpChatBackend>(pipeline::vlm_client_config(cfg));
        }
    }

    seg::SegBackend& seg() { return *seg_; }
    agent::ChatBackend& chat() { return mock_ ? static_cast<agent::ChatBackend&>(mock_->vlm()) : *chat_; }

private:
    std::unique_ptr<pipeline::MockServices> mock_;
    std::unique_ptr<seg::SegBackend> seg_;
    std::unique_ptr<agent::ChatBackend> chat_;
};

void apply_jaw(PipelineConfig& cfg, const std::string& jaw)
{
    if (!jaw.empty()) cfg.agent.jaw = agent::jaw_mode_from_string(jaw);
}

fs::path out_dir(const std::string& flag, const PipelineConfig& cfg)
{
    if (!flag.empty()) return flag;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    throw PreconditionError("no output directory (--out or output_dir)");
}

int finish(const TriMesh& mesh, const pipeline::RunResult& result, const PipelineConfig& cfg, const fs::path& out)
{
    pipeline::write_outputs(out, mesh, result, cfg);
    const auto& o = result.outcome;
    std::cout << "instances: " << result.arch.dossiers.size() << ", non-tooth: " << o.non_tooth.size()
              << ", correction rounds: " << o.correction_rounds << (o.non_converged ? " (not converged)" : "") << "\n";
    if (result.metrics) {
        const auto& m = *result.metrics;
        std::cout << "mIoU " << m.miou << "  TLA " << m.tla << "  TSA " << m.tsa << "  TIR " << m.tir << "\n";
    }
    std::cout << "outputs written to " << out.string() << "\n";
    return result.exit_code();
}

int cmd_run(const std::string& mesh_path, const std::string& config_path, bool mock, const std::string& jaw,
            const std::string& out_flag)
{
    auto cfg = config_at(config_path);
    apply_jaw(cfg, jaw);
    const auto out = out_dir(out_flag, cfg);
    const auto loaded = load_input(mesh_path);
    Backends backends(loaded, cfg, mock);
    const auto result = pipeline::run_pipeline(loaded.mesh, cfg, {backends.seg(), backends.chat()},
                                               pipeline::ground_truth_of(loaded).fdi);
    return finish(loaded.mesh, result, cfg, out);
}

int cmd_synth(const std::string& spec_path, const std::string& out_flag)
{
    const auto spec = spec_path.empty() ? synth::SynthArchSpec{} : synth::spec_from_json(read_file(spec_path));
    const auto arch = synth::generate_synthetic_arch(spec);
    const fs::path out = out_flag;
    fs::create_directories(out);
    MeshAttributes attrs;
    attrs.face_label = arch.instances.labels;
    attrs.face_fdi = fdi_vertex_to_face(arch.mesh, arch.fdi).labels;
    attrs.vertex_fdi = arch.fdi.labels;
    save_ply(out / "mesh.ply", arch.mesh, attrs);
    write_file(out / "spec.json", synth::spec_to_json(spec));
    std::cout << arch.teeth.size() << " teeth, " << arch.mesh.face_count() << " faces -> " << (out / "mesh.ply").string()
              << "\n";
    return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& json_path)
{
    const auto report = pipeline::evaluate_dirs(pred, gt);
    std::cout << metrics::format_table(report);
    const fs::path out = json_path.empty() ? fs::path(pred) / "metrics.json" : fs::path(json_path);
    write_file(out, metrics::report_to_json(report));
    std::cout << "report written to " << out.string() << "\n";
    return 0;
}

int cmd_mock_serve(int seg_port, int vlm_port, const std::string& mesh_path, const std::string& config_path)
{
    const auto cfg = config_at(config_path);
    const auto loaded = load_input(mesh_path);
    pipeline::MockServices services(loaded.mesh, gt_instances_of(loaded), cfg);
    pipeline::HttpMockServer seg_server(&services.seg_service(), nullptr, seg_port);
    pipeline::HttpMockServer vlm_server(nullptr, &services.vlm(), vlm_port);
    std::cout << "SEG_ENDPOINT=" << seg_server.endpoint() << "\n"
              << "VLM_ENDPOINT=" << vlm_server.endpoint() << std::endl;
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return 0;
}

int cmd_render_views(const std::string& mesh_path, const std::string& config_path, const std::string& out_flag)
{
    const auto cfg = config_at(config_path);
    const auto loaded = load_input(mesh_path);
    const auto frame = render::estimate_occlusal_frame(loaded.mesh);
    const auto renders = pipeline::render_views(loaded.mesh, frame, cfg);
    const auto out = out_dir(out_flag, cfg);
    pipeline::save_views(out, renders);
    std::cout << renders.size() << " views -> " << out.string() << "\n";
    return 0;
}

int cmd_fuse(const std::string& mesh_path, const std::string& views_dir, const std::string& config_path, bool mock,
             const std::string& out_path)
{
    const auto cfg = config_at(config_path);
    const auto loaded = load_input(mesh_path);
    const auto renders = pipeline::load_views(views_dir);
    Backends backends(loaded, cfg, mock);
    const auto masks = pipeline::segment_views(backends.seg(), loaded.mesh, renders, cfg);
    const auto fused = pipeline::fuse_masks(masks, loaded.mesh, cfg);
    write_file(out_path, fusion::labeling_to_json(fused));
    std::cout << masks.size() << " masks fused into " << instance_ids(fused).size() << " instances -> " << out_path
              << "\n";
    return 0;
}

int cmd_identify(const std::string& mesh_path, const std::string& views_dir, const std::string& fused_path,
                 const std::string& config_path, bool mock, const std::string& jaw, const std::string& out_flag)
{
    auto cfg = config_at(config_path);
    apply_jaw(cfg, jaw);
    const auto out = out_dir(out_flag, cfg);
    const auto loaded = load_input(mesh_path);
    auto renders = pipeline::load_views(views_dir);
    const auto fused = fusion::labeling_from_json(read_file(fused_path));
    if (fused.size() != loaded.mesh.face_count()) throw PreconditionError("fused labeling does not match the mesh");
    Backends backends(loaded, cfg, mock);
    const auto result = pipeline::identify(loaded.mesh, fused, std::move(renders), cfg, backends.chat(),
                                           pipeline::ground_truth_of(loaded).fdi);
    return finish(loaded.mesh, result, cfg, out);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Zero-shot tooth segmentation and FDI numbering for intra-oral scans"};
    app.require_subcommand(1);

    std::string mesh, config, out, jaw, spec, pred, gt, views, fused, json_out;
    bool mock = false;
    int seg_port = 8101, vlm_port = 8102;
    const std::vector<std::string> jaws{"upper", "lower", "auto"};

    auto* run = app.add_subcommand("run", "Full pipeline on one mesh");
    run->add_option("--mesh", mesh, "Input mesh (.ply or .obj)")->required();
    run->add_option("--config", config, "Flat JSON config; defaults when omitted");
    run->add_flag("--mock", mock, "Use the in-process mock services (needs ground-truth labels in the mesh)");
    run->add_option("--jaw", jaw, "Jaw to number")->check(CLI::IsMember(jaws));
    run->add_option("--out", out, "Output directory");

    auto* syn = app.add_subcommand("synth", "Generate a synthetic arch with ground truth");
    syn->add_option("--spec", spec, "Arch spec JSON; defaults when omitted");
    syn->add_option("--out", out, "Output directory")->required();

    auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
    ev->add_option("--pred", pred, "Directory of <case>/labeled.ply")->required();
    ev->add_option("--gt", gt, "Directory of <case>/mesh.ply")->required();
    ev->add_option("--json", json_out, "Report path (default <pred>/metrics.json)");

    auto* serve = app.add_subcommand("mock-serve", "Serve the mock segmenter and chat model over HTTP");
    serve->add_option("--seg-port", seg_port, "Segmentation port (0 picks a free one)");
    serve->add_option("--vlm-port", vlm_port, "Chat port (0 picks a free one)");
    serve->add_option("--mesh", mesh, "Mesh with ground-truth labels the mocks answer for")->required();
    serve->add_option("--config", config, "Flat JSON config");

    auto* rv = app.add_subcommand("render-views", "Render the view set to <out>");
    rv->add_option("--mesh", mesh, "Input mesh")->required();
    rv->add_option("--config", config, "Flat JSON config");
    rv->add_option("--out", out, "Views directory")->required();

    auto* fu = app.add_subcommand("fuse", "Segment rendered views and fuse the masks on the mesh");
    fu->add_option("--mesh", mesh, "Input mesh")->required();
    fu->add_option("--views", views, "Directory written by render-views")->required();
    fu->add_option("--config", config, "Flat JSON config");
    fu->add_flag("--mock", mock, "Use the in-process mock segmenter");
    fu->add_option("--out", out, "Fused labeling JSON")->required();

    auto* id = app.add_subcommand("identify", "Arch ordering and FDI numbering of a fused labeling");
    id->add_option("--mesh", mesh, "Input mesh")->required();
    id->add_option("--views", views, "Directory written by render-views")->required();
    id->add_option("--fused", fused, "Labeling written by fuse")->required();
    id->add_option("--config", config, "Flat JSON config");
    id->add_flag("--mock", mock, "Use the in-process mock chat model");
    id->add_option("--jaw", jaw, "Jaw to number")->check(CLI::IsMember(jaws));
    id->add_option("--out", out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(mesh, config, mock, jaw, out);
        if (*syn) return cmd_synth(spec, out);
        if (*ev) return cmd_eval(pred, gt, json_out);
        if (*serve) return cmd_mock_serve(seg_port, vlm_port, mesh, config);
        if (*rv) return cmd_render_views(mesh, config, out);
        if (*fu) return cmd_fuse(mesh, views, config, mock, out);
        if (*id) return cmd_identify(mesh, views, fused, config, mock, jaw, out);
    } catch (const std::exception& e) {
        std::cerr << "tsegpipe: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
