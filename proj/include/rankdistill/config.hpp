#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rankdistill/core.hpp"
#include "rankdistill/eval.hpp"
#include "rankdistill/models.hpp"
#include "rankdistill/trainer.hpp"

namespace rankdistill {

/// One run's settings. Built from a JSON document merged over the defaults.
struct RunConfig {
  // data
  std::string source = "synthetic";  // "synthetic" or "file"
  std::filesystem::path input;       // interactions TSV when source == "file"
  SyntheticSpec synthetic;
  std::size_t window = 5;
  SplitFractions splits;

  std::uint64_t seed = 1;
  std::size_t teacher_dim = 64;
  std::size_t student_dim = 8;
  std::uint64_t teacher_seed_offset = 1000;

  TrainConfig train;  // student and distillation settings
  // teacher overrides; unset means "same as train"
  std::optional<std::size_t> teacher_epochs;
  std::optional<double> teacher_lr;
  std::optional<double> teacher_l2;

  std::size_t itemcf_neighbors = 20;
  BprConfig bpr;
  std::size_t timing_repeats = 3;

  std::string sweep_param = "alpha";
  std::vector<double> sweep_values{0.0, 0.3, 0.5, 0.7, 1.0};

  std::size_t threads = 1;

  /// Throws ConfigError on the first bad value.
  void validate() const;

  [[nodiscard]] TrainConfig teacher_config() const;
  [[nodiscard]] TrainConfig student_config() const;

  /// Every field materialized.
  [[nodiscard]] std::string to_json() const;
};

/// Parses a config document. Unknown keys and type mismatches are config errors.
/// A null or missing distill.weighting.warmup resolves to floor(epochs / 2) + 1.
RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides = {});

/// Reads the file (IoError when unreadable) then parses as above.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

/// The defaults as a JSON document.
std::string default_config_json();

}  // namespace rankdistill
