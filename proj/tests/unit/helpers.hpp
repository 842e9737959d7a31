#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "rankdistill/core.hpp"

namespace test {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("rankdistill_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline rankdistill::Dataset small_synthetic(std::size_t users = 40, std::size_t items = 25,
                                            std::size_t len = 20, double sharpness = 5.0,
                                            std::uint64_t seed = 3) {
  const auto its = rankdistill::generate_synthetic({users, items, len, sharpness, seed});
  return rankdistill::build_dataset(its, users, items, 5);
}

}  // namespace test

#include <functional>
#include <vector>

#include "rankdistill/models.hpp"

namespace test {

/// Scatters a sparse ParamGradient into checkpoint order (user, item_in, item_out, bias).
inline std::vector<double> flatten(const rankdistill::ScoringModel& m,
                                   const rankdistill::ParamGradient& g) {
  const std::size_t d = m.dim(), U = m.num_users(), I = m.num_items();
  std::vector<double> out(m.parameter_count(), 0.0);
  for (std::size_t k = 0; k < d; ++k) out[g.user * d + k] += g.user_row[k];
  for (const auto& [j, r] : g.item_in_rows) {
    for (std::size_t k = 0; k < d; ++k) out[U * d + j * d + k] += r[k];
  }
  for (const auto& [i, r] : g.item_out_rows) {
    for (std::size_t k = 0; k < d; ++k) out[(U + I) * d + i * d + k] += r[k];
  }
  for (const auto& [i, b] : g.bias) out[(U + 2 * I) * d + i] += b;
  return out;
}

/// Worst relative error between `analytic` and central differences of `loss` over the
/// parameters listed in `probe`.
inline double fd_worst(rankdistill::ScoringModel& m, const std::vector<double>& analytic,
                       const std::function<double(const rankdistill::ScoringModel&)>& loss,
                       const std::vector<std::size_t>& probe, double h = 1e-5) {
  auto flat = m.flat_parameters();
  double worst = 0.0;
  for (auto p : probe) {
    const double keep = flat[p];
    flat[p] = keep + h;
    m.set_flat_parameters(flat);
    const double up = loss(m);
    flat[p] = keep - h;
    m.set_flat_parameters(flat);
    const double down = loss(m);
    flat[p] = keep;
    m.set_flat_parameters(flat);
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(analytic[p] - numeric) / (std::abs(analytic[p]) + 1e-8);
    // both effectively zero
    if (std::abs(analytic[p]) < 1e-10 && std::abs(numeric) < 1e-9) continue;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace test
