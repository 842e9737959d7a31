#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rankdistill/config.hpp"
#include "rankdistill/core.hpp"
#include "rankdistill/eval.hpp"

namespace rankdistill {

// Command layer behind the CLI. Every command writes <out>/resolved_config.json and
// puts its artifacts under `out` with fixed names:
//   dataset/  teacher/  student/  student_rd/  topk.tsv  eval/<model>.json
//   compare.txt  compare.csv  sweep_<param>.csv
// Errors surface as rankdistill::Error subclasses carrying the exit code.

struct LoadedData {
  InteractionLog log;
  Dataset dataset;
};

/// Synthetic walk or interactions file, windowed and split per the config.
LoadedData load_data(const RunConfig& config);

void cmd_ingest(const RunConfig& config, const std::filesystem::path& out, std::ostream& os);
void cmd_train_teacher(const RunConfig& config, const std::filesystem::path& out, std::ostream& os);
/// Ranking loss only at the student dimension; the no-distillation reference.
void cmd_train_student(const RunConfig& config, const std::filesystem::path& out, std::ostream& os);
/// Needs teacher/.
void cmd_topk(const RunConfig& config, const std::filesystem::path& out, std::ostream& os);
/// Needs topk.tsv.
void cmd_distill(const RunConfig& config, const std::filesystem::path& out, std::ostream& os);

/// `model` is one of teacher, student, student_rd (checkpoints under `out`) or
/// pop, itemcf, bpr (fit on the spot).
EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& out,
                        const std::string& model, std::ostream& os);

/// Teacher, top-K, student, student-RD and the three baselines, then compare against
/// the teacher row.
ComparisonTable cmd_bench(const RunConfig& config, const std::filesystem::path& out, std::ostream& os);

struct SweepRow {
  double value = 0.0;
  EvalReport report;
  std::size_t best_epoch = 0;
};

/// Re-runs distillation per grid value of sweep.param (alpha, K or lambda). Needs teacher/.
std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::filesystem::path& out,
                                std::ostream& os);

std::string format_stats(const DatasetStats& stats);

}  // namespace rankdistill
