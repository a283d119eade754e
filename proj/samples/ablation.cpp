// Point / point+line / point+line+mesh ablation over seeded box-and-wall
// scenes.
//
//   ablation [scenes] [noise_sigma]

#include <cstdio>
#include <cstdlib>

#include "sketchdepth/synth.hpp"

using namespace sketchdepth;

int main(int argc, char** argv) {
  const int scenes = argc > 1 ? std::atoi(argv[1]) : 8;
  synth::AblationConfig cfg;
  cfg.noise_sigma = argc > 2 ? std::atof(argv[2]) : 0.0;
  std::printf("%4s %10s %10s %10s %6s\n", "seed", "P", "P+L", "P+L+M", "lines");
  double sum[3] = {0, 0, 0};
  for (int seed = 0; seed < scenes; ++seed) {
    const auto r = synth::ablation_run(synth::box_wall_scene(seed), cfg);
    std::printf("%4d %10.1f %10.1f %10.1f %6d\n", seed, r.p.mae_mm, r.pl.mae_mm, r.plm.mae_mm, r.lines_used);
    sum[0] += r.p.mae_mm, sum[1] += r.pl.mae_mm, sum[2] += r.plm.mae_mm;
  }
  std::printf("mean %10.1f %10.1f %10.1f   (MAE, mm)\n", sum[0] / scenes, sum[1] / scenes, sum[2] / scenes);
}
