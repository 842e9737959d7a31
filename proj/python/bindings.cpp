#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rankdistill/config.hpp"
#include "rankdistill/core.hpp"
#include "rankdistill/error.hpp"
#include "rankdistill/eval.hpp"
#include "rankdistill/losses.hpp"
#include "rankdistill/models.hpp"
#include "rankdistill/pipeline.hpp"
#include "rankdistill/trainer.hpp"
#include "rankdistill/weighting.hpp"

namespace py = pybind11;
namespace rd = rankdistill;

namespace {

rd::QueryContext query(rd::UserId user, std::vector<rd::ItemId> history) {
  return {user, std::move(history)};
}

py::tuple loss_tuple(const rd::LossGrad& g) {
  py::dict grads;
  for (const auto& [item, v] : g.grads) grads[py::int_(item)] = v;
  return py::make_tuple(g.value, grads);
}

std::vector<rd::ItemScore> item_scores(const std::vector<std::pair<rd::ItemId, double>>& in) {
  std::vector<rd::ItemScore> out;
  out.reserve(in.size());
  for (const auto& [i, s] : in) out.push_back({i, s});
  return out;
}

template <typename Fn>
std::string captured(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

}  // namespace

PYBIND11_MODULE(_rankdistill, m) {
  m.doc() = "Ranking distillation core";

  static py::exception<rd::Error> base(m, "RankDistillError");
  static py::exception<rd::ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<rd::IoError> io_error(m, "IoError", base.ptr());
  static py::exception<rd::NumericError> numeric_error(m, "NumericError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const rd::ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const rd::IoError& e) {
      py::set_error(io_error, e.what());
    } catch (const rd::NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const rd::Error& e) {
      py::set_error(base, e.what());
    }
  });

  // data
  py::class_<rd::SplitFractions>(m, "SplitFractions")
      .def(py::init<>())
      .def(py::init([](double t, double v, double s) { return rd::SplitFractions{t, v, s}; }),
           py::arg("train"), py::arg("validation"), py::arg("test"))
      .def_readwrite("train", &rd::SplitFractions::train)
      .def_readwrite("validation", &rd::SplitFractions::validation)
      .def_readwrite("test", &rd::SplitFractions::test);

  py::class_<rd::SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("num_users", &rd::SyntheticSpec::num_users)
      .def_readwrite("num_items", &rd::SyntheticSpec::num_items)
      .def_readwrite("seq_len", &rd::SyntheticSpec::seq_len)
      .def_readwrite("sharpness", &rd::SyntheticSpec::sharpness)
      .def_readwrite("seed", &rd::SyntheticSpec::seed);

  m.def("generate_synthetic", [](const rd::SyntheticSpec& spec) {
    std::vector<std::tuple<rd::UserId, rd::ItemId, std::int64_t>> out;
    for (const auto& it : rd::generate_synthetic(spec)) out.emplace_back(it.user, it.item, it.timestamp);
    return out;
  }, "(user, item, timestamp) rows of a seeded Markov-chain walk");

  py::class_<rd::LabeledQuery>(m, "LabeledQuery")
      .def_property_readonly("user", [](const rd::LabeledQuery& q) { return q.context.user; })
      .def_property_readonly("history", [](const rd::LabeledQuery& q) { return q.context.history; })
      .def_readonly("target", &rd::LabeledQuery::target);

  py::class_<rd::Dataset>(m, "Dataset")
      .def_readonly("num_users", &rd::Dataset::num_users)
      .def_readonly("num_items", &rd::Dataset::num_items)
      .def_readonly("window", &rd::Dataset::window)
      .def_readonly("train", &rd::Dataset::train)
      .def_readonly("validation", &rd::Dataset::validation)
      .def_readonly("train_positives", &rd::Dataset::train_positives)
      .def_readonly("test_items", &rd::Dataset::test_items)
      .def("num_interactions", &rd::Dataset::num_interactions);

  m.def("build_dataset",
        [](const std::vector<std::tuple<rd::UserId, rd::ItemId, std::int64_t>>& rows,
           std::size_t num_users, std::size_t num_items, std::size_t window,
           const rd::SplitFractions& splits) {
          std::vector<rd::Interaction> its;
          its.reserve(rows.size());
          for (const auto& [u, i, t] : rows) its.push_back({u, i, t});
          return rd::build_dataset(its, num_users, num_items, window, splits);
        },
        py::arg("rows"), py::arg("num_users"), py::arg("num_items"), py::arg("window") = 5,
        py::arg("splits") = rd::SplitFractions{});

  m.def("synthetic_dataset",
        [](const rd::SyntheticSpec& spec, std::size_t window) {
          const auto its = rd::generate_synthetic(spec);
          return rd::build_dataset(its, spec.num_users, spec.num_items, window);
        },
        py::arg("spec") = rd::SyntheticSpec{}, py::arg("window") = 5);

  m.def("load_interactions", [](const std::filesystem::path& path) {
    const auto log = rd::load_interactions(path);
    std::vector<std::tuple<rd::UserId, rd::ItemId, std::int64_t>> rows;
    for (const auto& it : log.interactions) rows.emplace_back(it.user, it.item, it.timestamp);
    return py::make_tuple(rows, log.num_users(), log.num_items());
  }, "Returns (rows, num_users, num_items) with dense ids");

  m.def("dataset_stats", [](const rd::Dataset& ds) {
    const auto s = rd::dataset_stats(ds);
    py::dict d;
    d["users"] = s.users;
    d["items"] = s.items;
    d["interactions"] = s.interactions;
    d["avg_actions_per_user"] = s.avg_actions_per_user;
    d["train_pairs"] = s.train_pairs;
    d["sparsity"] = s.sparsity;
    return d;
  });

  // models
  py::class_<rd::Ranker>(m, "Ranker")
      .def("parameter_count", &rd::Ranker::parameter_count)
      .def("embedding_parameter_count", &rd::Ranker::embedding_parameter_count);

  py::class_<rd::ScoringModel, rd::Ranker>(m, "ScoringModel")
      .def(py::init<std::size_t, std::size_t, std::size_t>(), py::arg("num_users"),
           py::arg("num_items"), py::arg("dim"))
      .def_static("random", &rd::ScoringModel::random, py::arg("num_users"), py::arg("num_items"),
                  py::arg("dim"), py::arg("seed"), py::arg("scale") = 0.01)
      .def_property_readonly("dim", &rd::ScoringModel::dim)
      .def_property_readonly("num_users", &rd::ScoringModel::num_users)
      .def_property_readonly("num_items", &rd::ScoringModel::num_items)
      .def("score", [](const rd::ScoringModel& mdl, rd::UserId u, std::vector<rd::ItemId> h,
                       rd::ItemId i) { return mdl.score(query(u, std::move(h)), i); })
      .def("score_all", [](const rd::ScoringModel& mdl, rd::UserId u, std::vector<rd::ItemId> h,
                           const std::vector<rd::ItemId>& items) {
        return mdl.score_all(query(u, std::move(h)), items);
      })
      .def("flat_parameters", &rd::ScoringModel::flat_parameters)
      .def("set_flat_parameters", [](rd::ScoringModel& mdl, const std::vector<double>& p) {
        mdl.set_flat_parameters(p);
      })
      .def("gradient_step", [](rd::ScoringModel& mdl, rd::UserId u, std::vector<rd::ItemId> h,
                               const std::vector<std::pair<rd::ItemId, double>>& grads, double lr,
                               double l2) { mdl.gradient_step(query(u, std::move(h)), grads, lr, l2); })
      .def("save", [](const rd::ScoringModel& mdl, const std::filesystem::path& dir, std::uint64_t seed) {
        rd::save_checkpoint(mdl, dir, seed);
      }, py::arg("dir"), py::arg("seed") = 0)
      .def_static("load", &rd::load_checkpoint)
      .def(py::self == py::self);

  m.def("parameter_count", py::overload_cast<std::size_t, std::size_t, std::size_t>(&rd::parameter_count),
        py::arg("num_users"), py::arg("num_items"), py::arg("dim"));
  m.def("rank_candidates", [](const std::vector<rd::ItemId>& c, const std::vector<double>& s) {
    return rd::rank_candidates(c, s);
  });

  py::enum_<rd::BaselineKind>(m, "BaselineKind")
      .value("POP", rd::BaselineKind::kPop)
      .value("ITEMCF", rd::BaselineKind::kItemCF)
      .value("BPR", rd::BaselineKind::kBpr);

  py::class_<rd::BprConfig>(m, "BprConfig")
      .def(py::init<>())
      .def_readwrite("dim", &rd::BprConfig::dim)
      .def_readwrite("epochs", &rd::BprConfig::epochs)
      .def_readwrite("lr", &rd::BprConfig::lr)
      .def_readwrite("l2", &rd::BprConfig::l2)
      .def_readwrite("init_scale", &rd::BprConfig::init_scale)
      .def_readwrite("seed", &rd::BprConfig::seed);

  py::class_<rd::BaselineModel, rd::Ranker>(m, "BaselineModel")
      .def(py::init<rd::BaselineKind, std::size_t, rd::BprConfig>(), py::arg("kind"),
           py::arg("neighbors") = 20, py::arg("bpr") = rd::BprConfig{})
      .def("fit", &rd::BaselineModel::fit)
      .def("neighbors", &rd::BaselineModel::neighbors)
      .def("rank", [](const rd::BaselineModel& b, rd::UserId u, std::vector<rd::ItemId> h,
                      const std::vector<rd::ItemId>& candidates) {
        return rd::baseline_rank(b, query(u, std::move(h)), candidates);
      });

  // losses
  m.def("sigmoid", &rd::sigmoid);
  m.def("softplus", &rd::softplus);
  m.def("pointwise_loss", [](const std::vector<std::pair<rd::ItemId, double>>& pos,
                             const std::vector<std::pair<rd::ItemId, double>>& neg) {
    return loss_tuple(rd::pointwise_loss(item_scores(pos), item_scores(neg)));
  }, "positives and negatives as (item, score) pairs; returns (value, {item: dL/dscore})");
  m.def("pairwise_loss", [](const std::vector<std::pair<rd::ItemId, double>>& scores,
                            const rd::PairSet& pairs) {
    return loss_tuple(rd::pairwise_loss(item_scores(scores), pairs));
  });
  m.def("distillation_loss", [](const std::vector<rd::ItemId>& topk, const std::vector<double>& scores,
                                const std::vector<double>& weights) {
    return loss_tuple(rd::distillation_loss(topk, scores, weights));
  });

  // weighting
  py::enum_<rd::WeightMode>(m, "WeightMode")
      .value("UNIFORM", rd::WeightMode::kUniform)
      .value("RECIPROCAL", rd::WeightMode::kReciprocal)
      .value("GEOMETRIC_RHO", rd::WeightMode::kGeometricRho)
      .value("GEOMETRIC_LAMBDA", rd::WeightMode::kGeometricLambda)
      .value("DISCREPANCY", rd::WeightMode::kDiscrepancy)
      .value("HYBRID", rd::WeightMode::kHybrid);

  py::class_<rd::WeightConfig>(m, "WeightConfig")
      .def(py::init<>())
      .def_readwrite("mode", &rd::WeightConfig::mode)
      .def_readwrite("position_mode", &rd::WeightConfig::position_mode)
      .def_readwrite("lambda_", &rd::WeightConfig::lambda)
      .def_readwrite("rho", &rd::WeightConfig::rho)
      .def_readwrite("mu", &rd::WeightConfig::mu)
      .def_readwrite("epsilon", &rd::WeightConfig::epsilon)
      .def_readwrite("warmup", &rd::WeightConfig::warmup);

  m.def("position_weights", &rd::position_weights, py::arg("K"), py::arg("config") = rd::WeightConfig{});
  m.def("discrepancy_weights", [](const std::vector<std::size_t>& ranks, double mu) {
    return rd::discrepancy_weights(ranks, mu);
  });
  m.def("hybrid_weights", [](const std::vector<double>& wa, const std::vector<double>& wb) {
    const auto h = rd::hybrid_weights(wa, wb);
    return py::make_tuple(h.weights, h.zero_pressure);
  }, "returns (weights, zero_pressure)");
  m.def("estimate_rank", [](const std::vector<double>& pool_scores, std::size_t target,
                            std::size_t epsilon, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return rd::estimate_rank_from_scores(pool_scores, target, epsilon, rng).rank;
  }, py::arg("pool_scores"), py::arg("target"), py::arg("epsilon"), py::arg("seed") = 1);

  // training
  py::enum_<rd::RankingLossKind>(m, "RankingLoss")
      .value("POINTWISE", rd::RankingLossKind::kPointwise)
      .value("PAIRWISE", rd::RankingLossKind::kPairwise);

  py::class_<rd::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &rd::TrainConfig::epochs)
      .def_readwrite("lr", &rd::TrainConfig::lr)
      .def_readwrite("l2", &rd::TrainConfig::l2)
      .def_readwrite("negatives", &rd::TrainConfig::negatives)
      .def_readwrite("alpha", &rd::TrainConfig::alpha)
      .def_readwrite("K", &rd::TrainConfig::K)
      .def_readwrite("weights", &rd::TrainConfig::weights)
      .def_readwrite("seed", &rd::TrainConfig::seed)
      .def_readwrite("loss", &rd::TrainConfig::loss)
      .def_readwrite("init_scale", &rd::TrainConfig::init_scale);

  py::class_<rd::TrainResult>(m, "TrainResult")
      .def_readonly("model", &rd::TrainResult::model)
      .def_readonly("final_model", &rd::TrainResult::final_model)
      .def_readonly("best_epoch", &rd::TrainResult::best_epoch)
      .def_readonly("best_validation_map", &rd::TrainResult::best_validation_map)
      .def("log_jsonl", &rd::TrainResult::log_jsonl);

  py::class_<rd::TopKRanking>(m, "TopKRanking")
      .def_readonly("query", &rd::TopKRanking::query)
      .def_readonly("items", &rd::TopKRanking::items)
      .def_readonly("teacher_scores", &rd::TopKRanking::teacher_scores);

  m.def("train_teacher", &rd::train_teacher, py::arg("dataset"), py::arg("dim"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("generate_topk", &rd::generate_topk, py::arg("teacher"), py::arg("dataset"), py::arg("K"),
        py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("distill_train",
        [](const rd::Dataset& ds, const std::vector<rd::TopKRanking>& topk, std::size_t dim,
           const rd::TrainConfig& c) { return rd::distill_train(ds, topk, dim, c); },
        py::arg("dataset"), py::arg("topk"), py::arg("dim"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());

  // evaluation
  m.def("precision_at", [](const std::vector<rd::ItemId>& r, std::vector<rd::ItemId> rel, std::size_t n) {
    std::sort(rel.begin(), rel.end());
    return rd::precision_at(r, rel, n);
  });
  m.def("ndcg_at", [](const std::vector<rd::ItemId>& r, std::vector<rd::ItemId> rel, std::size_t n) {
    std::sort(rel.begin(), rel.end());
    return rd::ndcg_at(r, rel, n);
  });
  m.def("average_precision", [](const std::vector<rd::ItemId>& r, std::vector<rd::ItemId> rel) {
    std::sort(rel.begin(), rel.end());
    return rd::average_precision(r, rel);
  });

  py::class_<rd::EvalReport>(m, "EvalReport")
      .def_readonly("name", &rd::EvalReport::name)
      .def_readonly("metrics", &rd::EvalReport::metrics)
      .def_readonly("parameter_count", &rd::EvalReport::parameter_count)
      .def_readonly("embedding_parameter_count", &rd::EvalReport::embedding_parameter_count)
      .def_readonly("inference_seconds", &rd::EvalReport::inference_seconds)
      .def_readonly("queries", &rd::EvalReport::queries)
      .def("to_json", &rd::EvalReport::to_json);

  m.def("evaluate",
        [](const rd::Ranker& model, const rd::Dataset& ds, const std::string& split,
           std::size_t repeats, const std::string& name) {
          rd::EvalOptions opts;
          if (split == "validation") {
            opts.split = rd::EvalSplit::kValidation;
          } else if (split != "test") {
            throw rd::ConfigError("split must be 'test' or 'validation'");
          }
          opts.timing_repeats = repeats;
          return rd::evaluate_model(model, ds, opts, name);
        },
        py::arg("model"), py::arg("dataset"), py::arg("split") = "test", py::arg("repeats") = 1,
        py::arg("name") = "model");

  m.def("compare_text", [](const std::vector<rd::EvalReport>& reports, const std::string& ref) {
    return rd::compare(reports, ref).to_text();
  });

  // pipeline
  py::class_<rd::RunConfig>(m, "RunConfig")
      .def("to_json", &rd::RunConfig::to_json)
      .def_readonly("teacher_dim", &rd::RunConfig::teacher_dim)
      .def_readonly("student_dim", &rd::RunConfig::student_dim)
      .def_readonly("seed", &rd::RunConfig::seed)
      .def_property_readonly("train", &rd::RunConfig::student_config);
  m.def("parse_run_config", &rd::parse_run_config, py::arg("json_text") = "",
        py::arg("overrides") = std::vector<std::string>{});
  m.def("default_config_json", &rd::default_config_json);

  using Cmd = void (*)(const rd::RunConfig&, const std::filesystem::path&, std::ostream&);
  auto bind_cmd = [&m](const char* name, Cmd fn) {
    m.def(name, [fn](const rd::RunConfig& c, const std::filesystem::path& out) {
      return captured([&](std::ostream& os) { fn(c, out, os); });
    }, py::arg("config"), py::arg("out"), py::call_guard<py::gil_scoped_release>());
  };
  bind_cmd("cmd_ingest", &rd::cmd_ingest);
  bind_cmd("cmd_train_teacher", &rd::cmd_train_teacher);
  bind_cmd("cmd_train_student", &rd::cmd_train_student);
  bind_cmd("cmd_topk", &rd::cmd_topk);
  bind_cmd("cmd_distill", &rd::cmd_distill);
  bind_cmd("cmd_bench", [](const rd::RunConfig& c, const std::filesystem::path& out, std::ostream& os) {
    rd::cmd_bench(c, out, os);
  });
  bind_cmd("cmd_sweep", [](const rd::RunConfig& c, const std::filesystem::path& out, std::ostream& os) {
    rd::cmd_sweep(c, out, os);
  });
  m.def("cmd_evaluate", [](const rd::RunConfig& c, const std::filesystem::path& out, const std::string& model) {
    std::ostringstream os;
    return rd::cmd_evaluate(c, out, model, os);
  }, py::arg("config"), py::arg("out"), py::arg("model"));
}
