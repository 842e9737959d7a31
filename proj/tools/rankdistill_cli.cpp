// rankdistill command-line tool.
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rankdistill/config.hpp"
#include "rankdistill/error.hpp"
#include "rankdistill/pipeline.hpp"

namespace rd = rankdistill;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::size_t threads = 0;  // 0: keep the config value
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON run config (defaults apply when omitted)");
  cmd->add_option("-o,--out", c.out, "artifact directory")->capture_default_str();
  cmd->add_option("-t,--threads", c.threads, "worker threads for top-K generation");
  cmd->add_option("-s,--set", c.sets, "override a config leaf, e.g. distill.alpha=0.3");
}

rd::RunConfig resolve(const Common& c, std::vector<std::string> extra = {}) {
  std::vector<std::string> sets = std::move(extra);
  sets.insert(sets.end(), c.sets.begin(), c.sets.end());
  if (c.threads) sets.push_back("threads=" + std::to_string(c.threads));
  return c.config.empty() ? rd::parse_run_config("", sets) : rd::load_run_config(c.config, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ranking distillation toolkit: teacher, top-K, student, evaluation"};
  app.require_subcommand(1);
  Common common;

  auto* ingest = app.add_subcommand("ingest", "load or generate data and print stats");
  add_common(ingest, common);
  std::string input;
  ingest->add_option("-i,--input", input, "interactions TSV (user, item, timestamp)");

  auto* teacher = app.add_subcommand("train-teacher", "train the large model");
  add_common(teacher, common);
  auto* student = app.add_subcommand("train-student", "train the small model without distillation");
  add_common(student, common);
  auto* topk = app.add_subcommand("topk", "write the teacher's top-K cache");
  add_common(topk, common);
  auto* distill = app.add_subcommand("distill", "train the small model with distillation");
  add_common(distill, common);

  auto* evaluate = app.add_subcommand("evaluate", "score one model on the test split");
  add_common(evaluate, common);
  std::string model;
  evaluate->add_option("-m,--model", model, "teacher, student, student_rd, pop, itemcf or bpr")
      ->required();

  auto* bench = app.add_subcommand("bench", "full pipeline plus baselines and a compare table");
  add_common(bench, common);

  auto* sweep = app.add_subcommand("sweep", "re-run distillation over a grid");
  add_common(sweep, common);
  std::string param;
  std::vector<double> values;
  sweep->add_option("-p,--param", param, "alpha, K or lambda");
  sweep->add_option("-v,--values", values, "grid values")->delimiter(',');

  auto* show = app.add_subcommand("config", "print the resolved config");
  add_common(show, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(rd::ExitCode::kConfig);
  }

  try {
    const std::filesystem::path out = common.out;
    if (ingest->parsed()) {
      std::vector<std::string> extra;
      if (!input.empty()) {
        extra = {"data.source=file", "data.input=" + nlohmann::json(input).dump()};
      }
      rd::cmd_ingest(resolve(common, extra), out, std::cout);
    } else if (teacher->parsed()) {
      rd::cmd_train_teacher(resolve(common), out, std::cout);
    } else if (student->parsed()) {
      rd::cmd_train_student(resolve(common), out, std::cout);
    } else if (topk->parsed()) {
      rd::cmd_topk(resolve(common), out, std::cout);
    } else if (distill->parsed()) {
      rd::cmd_distill(resolve(common), out, std::cout);
    } else if (evaluate->parsed()) {
      rd::cmd_evaluate(resolve(common), out, model, std::cout);
    } else if (bench->parsed()) {
      rd::cmd_bench(resolve(common), out, std::cout);
    } else if (sweep->parsed()) {
      std::vector<std::string> extra;
      if (!param.empty()) extra.push_back("sweep.param=" + nlohmann::json(param).dump());
      if (!values.empty()) extra.push_back("sweep.values=" + nlohmann::json(values).dump());
      rd::cmd_sweep(resolve(common, extra), out, std::cout);
    } else if (show->parsed()) {
      std::cout << resolve(common).to_json();
    }
  } catch (const rd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed artifact: " << e.what() << "\n";
    return static_cast<int>(rd::ExitCode::kIo);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(rd::ExitCode::kIo);
  }
  return 0;
}
