// Writes a small synthetic monitoring dataset for trying the CLI:
//   monitors.csv    id,x_km,y_km,P1..P19 (annual means, before --sqrt)
//   covariates.csv  id,x_km,y_km,<GIS covariates>
//   grid.csv        id,x_km,y_km,<GIS covariates> on a regular grid

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "predpca/predpca.hpp"

using namespace predpca;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic demo data for predpca"};
  std::string out;
  int scenario = 2, n = 200, grid = 20;
  std::uint64_t seed = 1;
  app.add_option("--out", out)->required();
  app.add_option("--scenario", scenario)->check(CLI::IsMember({1, 2}));
  app.add_option("--monitors", n)->check(CLI::Range(20, 900));
  app.add_option("--grid", grid, "Grid cells per side (0 for an empty grid)")->check(CLI::Range(0, 200));
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  try {
    const SimConfig cfg = preset(scenario == 1 ? Scenario::high_predictability : Scenario::low_predictability);
    const SyntheticWorld world(cfg.world_seed);
    Rng rng(mix_seed(seed, 0));
    std::vector<Location> pool = world.location_pool(static_cast<std::size_t>(cfg.pool_size), 0);
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(n));
    const SimulatedExposure sim = gen_exposure(cfg, world, pool, mix_seed(seed, 1));

    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "M%03d", i + 1);
      ids.emplace_back(buf);
    }
    const Eigen::MatrixXd means = sim.data.raw.array().max(0.0).square();
    std::filesystem::create_directories(out);
    const std::filesystem::path dir(out);
    io::atomic_write(dir / "monitors.csv", io::located_csv(ids, pool, sim.data.pollutant_names, means));
    io::atomic_write(dir / "covariates.csv",
                     io::located_csv(ids, pool, sim.covariates.names, sim.covariates.values));

    std::vector<Location> cells;
    std::vector<std::string> cell_ids;
    for (int r = 0; r < grid; ++r)
      for (int c = 0; c < grid; ++c) {
        cells.push_back({SyntheticWorld::width_km() * (c + 0.5) / grid, SyntheticWorld::height_km() * (r + 0.5) / grid});
        cell_ids.push_back("G" + std::to_string(r * grid + c + 1));
      }
    const RawCovariateTable gcov = world.covariates(cells.empty() ? std::vector<Location>{{0.0, 0.0}} : cells);
    io::atomic_write(dir / "grid.csv",
                     io::located_csv(cell_ids, cells, gcov.names, gcov.values.topRows(static_cast<Eigen::Index>(cells.size()))));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
