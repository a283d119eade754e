// Renders a box-and-wall scene, completes its depth from 150 features and
// reports the metrics of each stage.
//
//   complete_synthetic [seed] [out_dir]

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "sketchdepth/io.hpp"
#include "sketchdepth/pipeline.hpp"
#include "sketchdepth/synth.hpp"

using namespace sketchdepth;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 0;
  const std::filesystem::path out = argc > 2 ? argv[2] : "complete_synthetic_out";
  std::filesystem::create_directories(out);

  const auto scene = synth::box_wall_scene(seed);
  const auto frame = synth::render(scene);
  const auto features = synth::sample_features(scene, 140, 10, 0.01, seed + 1);

  const auto result = complete_frame(frame.rgb, features, scene.camera);
  const auto mesh = evaluate(result.z_mesh, frame.depth);
  const auto dense = evaluate(result.z_dense, frame.depth);
  std::printf("mesh triangles   %zu\n", result.mesh.facets.size());
  std::printf("mesh coverage    %.1f %%\n", 100.0 * result.mask.count() / result.mask.size());
  std::printf("z_mesh  MAE %7.1f mm  RMSE %7.1f mm  d1 %5.1f %%\n", mesh.mae_mm, mesh.rmse_mm, mesh.acc1);
  std::printf("z_dense MAE %7.1f mm  RMSE %7.1f mm  d1 %5.1f %%\n", dense.mae_mm, dense.rmse_mm, dense.acc1);

  io::write_image_png(out / "image.png", frame.rgb);
  io::render_depth_png(frame.depth, out / "gt.png");
  io::render_depth_png(result.z_mesh, out / "z_mesh.png");
  io::render_depth_png(result.z_dense, out / "z_dense.png");
  io::write_mesh(out / "mesh.json", result.mesh);
  std::printf("wrote %s\n", out.string().c_str());
}
