// Desk-scale refinement training on one synthetic frame; saves the
// parameters for `sketchdepth complete --mdr-params`.
//
//   train_mdr [steps] [step_size] [params.bin]

#include <cstdio>
#include <cstdlib>

#include "sketchdepth/io.hpp"
#include "sketchdepth/pipeline.hpp"
#include "sketchdepth/synth.hpp"

using namespace sketchdepth;

int main(int argc, char** argv) {
  const int steps = argc > 1 ? std::atoi(argv[1]) : 200;
  const double step_size = argc > 2 ? std::atof(argv[2]) : 1e-3;
  const std::string path = argc > 3 ? argv[3] : "mdr_params.bin";

  const int w = 160, h = 120;
  const auto scene = synth::box_wall_scene(0, w, h);
  const auto frame = synth::render(scene);
  const auto features = synth::sample_features(scene, 140, 10, 0.0, 1);
  const auto rough = mesh_stage(features, scene.camera, PipelineConfig{});
  const mdr::TrainingFrame tf{frame.rgb, rough.depth, rough.mask, sparse_raster(features, w, h)};

  auto params = mdr::MdrParams::random(0);
  const auto log = mdr::train(params, tf, steps, step_size);
  for (std::size_t i = 0; i < log.objective.size(); i += 25) std::printf("step %4zu  objective %.5f\n", i, log.objective[i]);
  std::printf("final      objective %.5f\n", log.last());

  PipelineConfig cfg;
  cfg.mdr = path;
  cfg.mdr_params = params;
  const auto refined = complete_frame(frame.rgb, features, scene.camera, cfg);
  const auto filled = complete_frame(frame.rgb, features, scene.camera);
  std::printf("MAE filled z_mesh %.1f mm, refined %.1f mm\n", evaluate(filled.z_dense, frame.depth).mae_mm,
              evaluate(refined.z_dense, frame.depth).mae_mm);
  io::write_mdr_params(path, params);
  std::printf("wrote %s\n", path.c_str());
}
