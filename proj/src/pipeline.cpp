#include "rankdistill/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "rankdistill/error.hpp"
#include "rankdistill/models.hpp"
#include "rankdistill/trainer.hpp"

namespace rankdistill {
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void begin(const RunConfig& config, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / "resolved_config.json", config.to_json());
}

std::string hyper_json(const TrainConfig& c, std::size_t dim) {
  nlohmann::ordered_json j;
  j["dim"] = dim;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["l2"] = c.l2;
  j["negatives"] = c.negatives;
  j["loss"] = to_string(c.loss);
  j["alpha"] = c.alpha;
  j["K"] = c.K;
  j["weighting"] = to_string(c.weights.mode);
  return j.dump();
}

// Trains, and on divergence saves the last finite model next to the target before
// rethrowing with its path.
template <typename Fn>
TrainResult guarded(Fn&& train, const fs::path& dir, std::uint64_t seed) {
  try {
    return train();
  } catch (const DivergenceError& e) {
    const fs::path rescue = dir.string() + "_last_finite";
    if (e.last_finite()) save_checkpoint(*e.last_finite(), rescue, seed);
    throw NumericError(std::string(e.what()) + "; last finite model saved to " + rescue.string());
  }
}

void save_run(const TrainResult& r, const fs::path& dir, const TrainConfig& c, std::size_t dim) {
  save_checkpoint(r.model, dir, c.seed, hyper_json(c, dim));
  write_text(dir / "trainlog.jsonl", r.log_jsonl());
}

void require(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing " + what + ": " + path.string() +
                               " (run the producing command first)");
  }
}

ScoringModel load_model(const fs::path& out, const std::string& name) {
  require(out / name, name + " checkpoint");
  return load_checkpoint(out / name);
}

void report_training(std::ostream& os, const std::string& name, const TrainResult& r) {
  os << name << ": best epoch " << r.best_epoch << ", validation MAP "
     << std::setprecision(6) << r.best_validation_map << "\n";
}

std::string metrics_line(const EvalReport& r) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4);
  ss << r.name;
  for (const auto& [k, v] : r.metrics) ss << "  " << k << "=" << v;
  ss << "  params=" << r.parameter_count;
  ss << std::setprecision(6) << "  seconds=" << r.inference_seconds << "\n";
  return ss.str();
}

EvalReport evaluate_and_save(const Ranker& model, const Dataset& ds, const RunConfig& config,
                             const fs::path& out, const std::string& name, std::ostream& os) {
  EvalOptions opts;
  opts.split = EvalSplit::kTest;
  opts.timing_repeats = config.timing_repeats;
  auto report = evaluate_model(model, ds, opts, name);
  write_text(out / "eval" / (name + ".json"), report.to_json() + "\n");
  os << metrics_line(report);
  return report;
}

}  // namespace

LoadedData load_data(const RunConfig& config) {
  LoadedData d;
  if (config.source == "file") {
    d.log = load_interactions(config.input);
  } else {
    d.log = make_log(generate_synthetic(config.synthetic), config.synthetic.num_users,
                     config.synthetic.num_items);
  }
  d.dataset = build_dataset(d.log.interactions, d.log.num_users(), d.log.num_items(),
                            config.window, config.splits);
  return d;
}

std::string format_stats(const DatasetStats& s) {
  std::ostringstream ss;
  ss << "users                 " << s.users << "\n";
  ss << "items                 " << s.items << "\n";
  ss << "interactions          " << s.interactions << "\n";
  ss << "avg actions per user  " << std::fixed << std::setprecision(2) << s.avg_actions_per_user << "\n";
  ss << "training pairs        " << s.train_pairs << "\n";
  ss << "sparsity              " << std::setprecision(6) << s.sparsity << "\n";
  return ss.str();
}

void cmd_ingest(const RunConfig& config, const fs::path& out, std::ostream& os) {
  begin(config, out);
  const auto data = load_data(config);
  save_dataset(data.dataset, data.log, config.synthetic.seed, out / "dataset");
  os << format_stats(dataset_stats(data.dataset));
}

void cmd_train_teacher(const RunConfig& config, const fs::path& out, std::ostream& os) {
  begin(config, out);
  const auto data = load_data(config);
  const auto tc = config.teacher_config();
  const auto r = guarded([&] { return train_teacher(data.dataset, config.teacher_dim, tc); },
                         out / "teacher", tc.seed);
  save_run(r, out / "teacher", tc, config.teacher_dim);
  report_training(os, "teacher", r);
}

void cmd_train_student(const RunConfig& config, const fs::path& out, std::ostream& os) {
  begin(config, out);
  const auto data = load_data(config);
  const auto sc = config.student_config();
  const auto r = guarded([&] { return train_teacher(data.dataset, config.student_dim, sc); },
                         out / "student", sc.seed);
  save_run(r, out / "student", sc, config.student_dim);
  report_training(os, "student", r);
}

void cmd_topk(const RunConfig& config, const fs::path& out, std::ostream& os) {
  begin(config, out);
  const auto teacher = load_model(out, "teacher");
  const auto data = load_data(config);
  const auto topk = generate_topk(teacher, data.dataset, config.train.K, config.threads);
  save_topk(topk, out / "topk.tsv");
  os << "top-" << config.train.K << " lists for " << topk.size() << " training queries\n";
}

void cmd_distill(const RunConfig& config, const fs::path& out, std::ostream& os) {
  begin(config, out);
  require(out / "topk.tsv", "teacher top-K cache");
  const auto topk = load_topk(out / "topk.tsv");
  const auto data = load_data(config);
  const auto sc = config.student_config();
  for (const auto& t : topk) {
    if (t.items.size() != sc.K) {
      throw ConfigError("topk.tsv holds K=" + std::to_string(t.items.size()) +
                        " lists but distill.K is " + std::to_string(sc.K));
    }
  }
  const auto r = guarded([&] { return distill_train(data.dataset, topk, config.student_dim, sc); },
                         out / "student_rd", sc.seed);
  save_run(r, out / "student_rd", sc, config.student_dim);
  report_training(os, "student_rd", r);
}

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& out, const std::string& model,
                        std::ostream& os) {
  begin(config, out);
  if (model == "teacher" || model == "student" || model == "student_rd") {
    const auto m = load_model(out, model);
    const auto data = load_data(config);
    return evaluate_and_save(m, data.dataset, config, out, model, os);
  }
  BaselineKind kind;
  if (model == "pop") {
    kind = BaselineKind::kPop;
  } else if (model == "itemcf") {
    kind = BaselineKind::kItemCF;
  } else if (model == "bpr") {
    kind = BaselineKind::kBpr;
  } else {
    throw ConfigError("unknown model '" + model +
                      "' (expected teacher, student, student_rd, pop, itemcf or bpr)");
  }
  const auto data = load_data(config);
  BaselineModel b(kind, config.itemcf_neighbors, config.bpr);
  b.fit(data.dataset);
  return evaluate_and_save(b, data.dataset, config, out, model, os);
}

ComparisonTable cmd_bench(const RunConfig& config, const fs::path& out, std::ostream& os) {
  begin(config, out);
  const auto data = load_data(config);
  const auto& ds = data.dataset;
  save_dataset(ds, data.log, config.synthetic.seed, out / "dataset");
  os << format_stats(dataset_stats(ds));

  const auto tc = config.teacher_config();
  const auto sc = config.student_config();
  const auto teacher = guarded([&] { return train_teacher(ds, config.teacher_dim, tc); },
                               out / "teacher", tc.seed);
  save_run(teacher, out / "teacher", tc, config.teacher_dim);
  report_training(os, "teacher", teacher);

  const auto topk = generate_topk(teacher.model, ds, sc.K, config.threads);
  save_topk(topk, out / "topk.tsv");

  const auto student = guarded([&] { return train_teacher(ds, config.student_dim, sc); },
                               out / "student", sc.seed);
  save_run(student, out / "student", sc, config.student_dim);
  report_training(os, "student", student);

  const auto rd = guarded([&] { return distill_train(ds, topk, config.student_dim, sc); },
                          out / "student_rd", sc.seed);
  save_run(rd, out / "student_rd", sc, config.student_dim);
  report_training(os, "student_rd", rd);

  std::vector<EvalReport> reports;
  reports.push_back(evaluate_and_save(teacher.model, ds, config, out, "teacher", os));
  reports.push_back(evaluate_and_save(student.model, ds, config, out, "student", os));
  reports.push_back(evaluate_and_save(rd.model, ds, config, out, "student_rd", os));
  for (auto [kind, name] : {std::pair{BaselineKind::kPop, "pop"}, std::pair{BaselineKind::kItemCF, "itemcf"},
                            std::pair{BaselineKind::kBpr, "bpr"}}) {
    BaselineModel b(kind, config.itemcf_neighbors, config.bpr);
    b.fit(ds);
    reports.push_back(evaluate_and_save(b, ds, config, out, name, os));
  }

  auto table = compare(reports, "teacher");
  write_text(out / "compare.txt", table.to_text());
  write_text(out / "compare.csv", table.to_csv());
  os << "\n" << table.to_text();
  return table;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& config, const fs::path& out, std::ostream& os) {
  begin(config, out);
  const auto teacher = load_model(out, "teacher");
  const auto data = load_data(config);
  const auto& ds = data.dataset;

  std::size_t max_k = config.train.K;
  if (config.sweep_param == "K") {
    for (double v : config.sweep_values) max_k = std::max(max_k, static_cast<std::size_t>(v));
  }
  // Shorter lists are prefixes of the longest one.
  const auto full = generate_topk(teacher, ds, max_k, config.threads);

  std::vector<SweepRow> rows;
  std::ostringstream csv;
  csv << config.sweep_param << ",prec@3,prec@5,prec@10,ndcg@3,ndcg@5,ndcg@10,map,best_epoch\n";
  for (double v : config.sweep_values) {
    TrainConfig c = config.student_config();
    if (config.sweep_param == "alpha") c.alpha = v;
    if (config.sweep_param == "K") c.K = static_cast<std::size_t>(v);
    if (config.sweep_param == "lambda") c.weights.lambda = v;
    c.validate();
    auto topk = full;
    for (auto& t : topk) {
      t.items.resize(c.K);
      t.teacher_scores.resize(c.K);
    }
    const std::string tag = config.sweep_param + "_" + format_double(v);
    const auto r = guarded([&] { return distill_train(ds, topk, config.student_dim, c); },
                           out / ("sweep_" + tag), c.seed);
    EvalOptions opts;
    opts.timing_repeats = 1;
    SweepRow row{v, evaluate_model(r.model, ds, opts, tag), r.best_epoch};
    csv << format_double(v);
    for (const char* m : {"prec@3", "prec@5", "prec@10", "ndcg@3", "ndcg@5", "ndcg@10", "map"}) {
      csv << "," << format_double(row.report.metrics.at(m));
    }
    csv << "," << row.best_epoch << "\n";
    os << metrics_line(row.report);
    rows.push_back(std::move(row));
  }
  write_text(out / ("sweep_" + config.sweep_param + ".csv"), csv.str());
  return rows;
}

}  // namespace rankdistill
