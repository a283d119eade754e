// sketchdepth command-line tool: synth, triangulate, complete, eval, render.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sketchdepth/io.hpp"
#include "sketchdepth/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sketchdepth;

namespace {

struct SynthArgs {
  std::string scene, preset, out;
  std::optional<std::uint64_t> seed;
  int width = 640, height = 480;
};

struct TriangulateArgs {
  std::string features, out;
  double snap = cdt::kDefaultSnapTolerance;
};

struct CompleteArgs {
  std::string stage = "dense", mode = "planar3d", features, intrinsics, image, mdr_params = "identity";
  std::string estimator = "passthrough", zmesh, zrefined, out, mask_out, render_out;
  std::uint64_t seed = 0;
  double snap = cdt::kDefaultSnapTolerance;
};

struct EvalArgs {
  std::string pred, gt, csv, manifest;
  std::optional<int> frame;
  bool losses = false;
};

struct RenderArgs {
  std::string depth, out;
};

int run_synth(const SynthArgs& a) {
  io::SceneFile sf;
  if (!a.scene.empty()) {
    sf = io::read_scene(a.scene, a.seed);
  } else {
    json j{{"preset", a.preset}, {"width", a.width}, {"height", a.height}, {"seed", a.seed.value_or(0)}};
    sf = io::scene_from_json(j, a.seed.value_or(0), a.seed.has_value(), "--preset");
  }
  const auto m = io::write_synth_dataset(a.out, sf);
  std::cout << json{{"out", a.out}, {"frames", m.frames.size()}}.dump() << "\n";
  return 0;
}

int run_triangulate(const TriangulateArgs& a) {
  const auto mesh = cdt::triangulate(cdt::prepare_sites(io::read_features(a.features), a.snap));
  io::write_mesh(a.out, mesh);
  std::cout << json{{"vertices", mesh.vertices.size()}, {"edges", mesh.edges.size()}, {"facets", mesh.facets.size()}}.dump()
            << "\n";
  return 0;
}

DepthMap load_depth(const std::string& path, const Intrinsics& k, const char* what) {
  auto d = io::read_depth(path);
  if (!d.same_shape(k.width, k.height)) throw ShapeError(std::string(what) + ": size differs from the intrinsics");
  return d;
}

int run_complete(const CompleteArgs& a) {
  const Stage stage = parse_stage(a.stage);
  const Intrinsics k = io::read_intrinsics(a.intrinsics);
  PipelineConfig cfg;
  cfg.mode = parse_mode(a.mode);
  cfg.mdr = a.mdr_params;
  if (a.mdr_params != "identity") cfg.mdr_params = io::read_mdr_params(a.mdr_params);
  cfg.estimator = a.estimator;
  cfg.seed = a.seed;
  cfg.snap_tolerance = a.snap;
  cfg.validate();

  std::optional<ImageBuffer> image;
  auto need_image = [&]() -> const ImageBuffer& {
    if (!image) {
      if (a.image.empty()) throw ContractError("--image is required for the refined and dense stages");
      image = io::read_image_png(a.image);
      if (image->width() != k.width || image->height() != k.height)
        throw ShapeError("--image: size differs from the intrinsics");
    }
    return *image;
  };

  DepthMap out;
  std::optional<ValidMask> mask;
  if (!a.zrefined.empty()) {
    if (stage != Stage::Dense) throw ContractError("--zrefined only feeds the dense stage");
    out = estimate_stage(need_image(), load_depth(a.zrefined, k, "--zrefined"), k, cfg);
  } else {
    DepthMap z_mesh;
    if (!a.zmesh.empty()) {
      if (stage == Stage::Mesh) throw ContractError("--zmesh feeds the refined and dense stages");
      z_mesh = load_depth(a.zmesh, k, "--zmesh");
    } else {
      if (a.features.empty()) throw ContractError("--features is required unless --zmesh or --zrefined is given");
      auto rough = mesh_stage(io::read_features(a.features), k, cfg);
      z_mesh = std::move(rough.depth);
    }
    mask = ValidMask::from_depth(z_mesh);
    out = z_mesh;
    if (stage != Stage::Mesh) out = refine_stage(need_image(), z_mesh, *mask, cfg);
    if (stage == Stage::Dense) out = estimate_stage(need_image(), out, k, cfg);
  }
  io::write_depth(a.out, out);
  if (!a.mask_out.empty()) io::write_mask_png(a.mask_out, mask ? *mask : ValidMask::from_depth(out));
  if (!a.render_out.empty()) io::render_depth_png(out, a.render_out);
  std::cout << json{{"stage", a.stage}, {"out", a.out}, {"valid_count", out.valid_count()}}.dump() << "\n";
  return 0;
}

json report_json(const EvalReport& r, std::optional<int> frame) {
  json j;
  if (frame) j["frame"] = *frame;
  j.update({{"mae_mm", r.mae_mm},
            {"rmse_mm", r.rmse_mm},
            {"acc1", r.acc1},
            {"acc2", r.acc2},
            {"acc3", r.acc3},
            {"valid_count", r.valid_count}});
  return j;
}

void append_csv(const std::string& path, const EvalReport& r, std::optional<int> frame) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot open " + path + " for appending");
  if (fresh) os << "frame,mae_mm,rmse_mm,d1,d2,d3,valid_count\n";
  os << (frame ? std::to_string(*frame) : std::string()) << ',' << io::detail::num(r.mae_mm) << ','
     << io::detail::num(r.rmse_mm) << ',' << io::detail::num(r.acc1) << ',' << io::detail::num(r.acc2) << ','
     << io::detail::num(r.acc3) << ',' << r.valid_count << '\n';
  if (!os) throw IoError("write failed: " + path);
}

/// Losses of a predicted depth for one manifest frame; the previous and
/// next frames (where present) act as source views.
int run_losses(const EvalArgs& a) {
  if (a.manifest.empty() || !a.frame) throw ContractError("--losses needs --manifest and --frame");
  const auto m = io::read_manifest(a.manifest);
  const std::size_t t = io::frame_index(m, *a.frame);
  const auto target = io::load_frame(a.manifest, m, t);
  const auto& k = m.intrinsics;
  FrameWindow win;
  win.target_image = target.image;
  win.target_pose = target.pose;
  win.target_sparse_depth = sparse_raster(target.features, k.width, k.height);
  for (std::size_t s : {t - 1, t + 1}) {
    if (s >= m.frames.size()) continue;  // wraps for t == 0
    auto f = io::load_frame(a.manifest, m, s);
    win.sources.push_back({std::move(f.image), f.pose});
  }
  const auto b = evaluate_losses(win, load_depth(a.pred, k, "--pred"), k);
  std::cout << json{{"frame", *a.frame}, {"l_p", b.l_p}, {"l_s", b.l_s}, {"l_l", b.l_l}, {"L", b.total}}.dump() << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  if (a.losses) return run_losses(a);
  if (a.pred.empty() || a.gt.empty()) throw ContractError("eval needs --pred and --gt");
  const auto r = evaluate(io::read_depth(a.pred), io::read_depth(a.gt));
  std::cout << report_json(r, a.frame).dump() << "\n";
  if (!a.csv.empty()) append_csv(a.csv, r, a.frame);
  return 0;
}

int run_render(const RenderArgs& a) {
  io::render_depth_png(io::read_depth(a.depth), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse point/line depth to dense depth maps"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  auto* scene_opt = synth->add_option("--scene", sa.scene, "Scene JSON")->check(CLI::ExistingFile);
  synth->add_option("--preset", sa.preset, "box-wall | fronto | slanted")->excludes(scene_opt);
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--seed", sa.seed, "Scene and feature seed");
  synth->add_option("--width", sa.width)->check(CLI::PositiveNumber);
  synth->add_option("--height", sa.height)->check(CLI::PositiveNumber);

  TriangulateArgs ta;
  auto* tri = app.add_subcommand("triangulate", "Constrained Delaunay mesh of a feature set");
  tri->add_option("--features", ta.features)->required()->check(CLI::ExistingFile);
  tri->add_option("--snap", ta.snap, "Snap tolerance in pixels");
  tri->add_option("--out", ta.out, "Mesh JSON")->required();

  CompleteArgs ca;
  auto* comp = app.add_subcommand("complete", "Run the completion pipeline up to a stage");
  comp->add_option("--stage", ca.stage)->check(CLI::IsMember({"mesh", "refined", "dense"}));
  comp->add_option("--mode", ca.mode)->check(CLI::IsMember({"planar3d", "barycentric"}));
  comp->add_option("--features", ca.features)->check(CLI::ExistingFile);
  comp->add_option("--intrinsics", ca.intrinsics)->required()->check(CLI::ExistingFile);
  comp->add_option("--image", ca.image)->check(CLI::ExistingFile);
  comp->add_option("--mdr-params", ca.mdr_params, "Parameter file or \"identity\"");
  comp->add_option("--estimator", ca.estimator);
  comp->add_option("--seed", ca.seed);
  comp->add_option("--snap", ca.snap);
  comp->add_option("--zmesh", ca.zmesh, "Start from a stored mesh depth")->check(CLI::ExistingFile);
  comp->add_option("--zrefined", ca.zrefined, "Start from a stored refined depth")->check(CLI::ExistingFile);
  comp->add_option("--out", ca.out, ".png (mm) or .dmap (f64)")->required();
  comp->add_option("--mask-out", ca.mask_out);
  comp->add_option("--render-out", ca.render_out);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Depth metrics or losses");
  ev->add_option("--pred", ea.pred)->check(CLI::ExistingFile);
  ev->add_option("--gt", ea.gt)->check(CLI::ExistingFile);
  ev->add_option("--csv", ea.csv, "Append a CSV row");
  ev->add_option("--frame", ea.frame);
  ev->add_flag("--losses", ea.losses, "Print the loss terms instead");
  ev->add_option("--manifest", ea.manifest, "Dataset directory")->check(CLI::ExistingDirectory);

  RenderArgs ra;
  auto* ren = app.add_subcommand("render", "Colormapped visualization of a depth map");
  ren->add_option("--depth", ra.depth)->required()->check(CLI::ExistingFile);
  ren->add_option("--out", ra.out)->required();

  try {
    app.parse(argc, argv);
    if (synth->parsed() && sa.scene.empty() && sa.preset.empty())
      throw CLI::ValidationError("synth", "one of --scene or --preset is required");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(sa);
    if (tri->parsed()) return run_triangulate(ta);
    if (comp->parsed()) return run_complete(ca);
    if (ev->parsed()) return run_eval(ea);
    if (ren->parsed()) return run_render(ra);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
