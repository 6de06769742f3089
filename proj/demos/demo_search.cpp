// Minimal end-to-end demo: generate a phantom, run a short discrete search
// with each acquisition strategy, print the recall trajectory.

#include "stiffsearch/stiffsearch.hpp"

#include <cstdio>

using namespace stiffsearch;

int main() {
  Config cfg = Config::from_map({}, "demo");
  cfg.grid_nx = cfg.grid_ny = 30;
  cfg.search_probes = 20;
  cfg.seed = 7;

  for (const char* method : {"aas", "lse", "unc", "ei"}) {
    cfg.method = method;
    RunResult r = run_discrete(cfg, cfg.seed, cfg.seed);
    std::printf("%-4s recall:", method);
    for (size_t i = 4; i < r.steps.size(); i += 5)
      std::printf(" %5.3f", r.steps[i].recall);
    std::printf("  (final %5.3f)\n", r.final_recall);
  }
  return 0;
}
