#include "rankdistill/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rankdistill/error.hpp"

namespace rankdistill {
namespace {

using json = nlohmann::ordered_json;

json defaults() {
  json j;
  j["data"] = {
      {"source", "synthetic"},
      {"input", nullptr},
      {"synthetic",
       {{"num_users", 500}, {"num_items", 200}, {"seq_len", 50}, {"sharpness", 5.0},
        {"seed", nullptr}}},
      {"window", 5},
      {"splits", {{"train", 0.7}, {"validation", 0.1}, {"test", 0.2}}},
  };
  j["seed"] = 1;
  j["teacher"] = {{"dim", 64}, {"seed_offset", 1000}, {"epochs", nullptr}, {"lr", nullptr},
                  {"l2", 1e-2}};
  j["student"] = {{"dim", 8}};
  j["train"] = {{"epochs", 30}, {"lr", 0.01},         {"l2", 1e-3},
                {"negatives", 3}, {"loss", "pointwise"}, {"init_scale", 0.1}};
  j["distill"] = {{"alpha", 0.5},
                  {"K", 10},
                  {"weighting",
                   {{"mode", "hybrid"},
                    {"position_mode", "geometric_lambda"},
                    {"lambda", 1.0},
                    {"rho", 0.1},
                    {"mu", 0.1},
                    {"epsilon", 20},
                    {"warmup", nullptr}}}};
  j["baselines"] = {{"itemcf_neighbors", 20},
                    {"bpr",
                     {{"dim", 16}, {"epochs", 30}, {"lr", 0.05}, {"l2", 1e-4}, {"init_scale", 0.01},
                      {"seed", nullptr}}}};
  j["eval"] = {{"timing_repeats", 3}};
  j["sweep"] = {{"param", "alpha"}, {"values", {0.0, 0.3, 0.5, 0.7, 1.0}}};
  j["threads"] = 1;
  return j;
}

// Overlays `patch` onto `base`; keys absent from `base` are rejected.
void merge(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, path);
    } else {
      slot = value;
    }
  }
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "' is not of the form key.path=value");
  }
  const std::string path = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::string walked;
  std::stringstream ss(path);
  for (std::string key; std::getline(ss, key, '.');) {
    walked += (walked.empty() ? "" : ".") + key;
    if (!node->is_object() || !node->contains(key)) {
      throw ConfigError("unknown config key '" + walked + "'");
    }
    node = &(*node)[key];
  }
  if (node->is_object()) {
    merge(*node, value, path);
    return;
  }
  *node = std::move(value);
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
    throw ConfigError("config key '" + where + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key, const std::string& where) {
  if (j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, where);
}

RunConfig from_json(const json& j) {
  RunConfig c;
  const auto& data = j.at("data");
  c.source = get<std::string>(data, "source", "data.");
  if (!data.at("input").is_null()) c.input = get<std::string>(data, "input", "data.");
  const auto& syn = data.at("synthetic");
  c.synthetic.num_users = get_count(syn, "num_users", "data.synthetic.");
  c.synthetic.num_items = get_count(syn, "num_items", "data.synthetic.");
  c.synthetic.seq_len = get_count(syn, "seq_len", "data.synthetic.");
  c.synthetic.sharpness = get<double>(syn, "sharpness", "data.synthetic.");
  c.window = get_count(data, "window", "data.");
  const auto& sp = data.at("splits");
  c.splits = {get<double>(sp, "train", "data.splits."), get<double>(sp, "validation", "data.splits."),
              get<double>(sp, "test", "data.splits.")};

  c.seed = get<std::uint64_t>(j, "seed", "");
  c.synthetic.seed = get_optional<std::uint64_t>(syn, "seed", "data.synthetic.").value_or(c.seed);

  const auto& t = j.at("teacher");
  c.teacher_dim = get_count(t, "dim", "teacher.");
  c.teacher_seed_offset = get<std::uint64_t>(t, "seed_offset", "teacher.");
  if (!t.at("epochs").is_null()) c.teacher_epochs = get_count(t, "epochs", "teacher.");
  c.teacher_lr = get_optional<double>(t, "lr", "teacher.");
  c.teacher_l2 = get_optional<double>(t, "l2", "teacher.");
  c.student_dim = get_count(j.at("student"), "dim", "student.");

  const auto& tr = j.at("train");
  c.train.epochs = get_count(tr, "epochs", "train.");
  c.train.lr = get<double>(tr, "lr", "train.");
  c.train.l2 = get<double>(tr, "l2", "train.");
  c.train.negatives = get_count(tr, "negatives", "train.");
  c.train.loss = parse_ranking_loss(get<std::string>(tr, "loss", "train."));
  c.train.init_scale = get<double>(tr, "init_scale", "train.");
  c.train.seed = c.seed;

  const auto& d = j.at("distill");
  c.train.alpha = get<double>(d, "alpha", "distill.");
  c.train.K = get_count(d, "K", "distill.");
  const auto& w = d.at("weighting");
  const std::string wp = "distill.weighting.";
  c.train.weights.mode = parse_weight_mode(get<std::string>(w, "mode", wp));
  c.train.weights.position_mode = parse_weight_mode(get<std::string>(w, "position_mode", wp));
  c.train.weights.lambda = get<double>(w, "lambda", wp);
  c.train.weights.rho = get<double>(w, "rho", wp);
  c.train.weights.mu = get<double>(w, "mu", wp);
  c.train.weights.epsilon = get_count(w, "epsilon", wp);
  c.train.weights.warmup =
      w.at("warmup").is_null() ? c.train.epochs / 2 + 1 : get_count(w, "warmup", wp);

  const auto& b = j.at("baselines");
  c.itemcf_neighbors = get_count(b, "itemcf_neighbors", "baselines.");
  const auto& bpr = b.at("bpr");
  c.bpr.dim = get_count(bpr, "dim", "baselines.bpr.");
  c.bpr.epochs = get_count(bpr, "epochs", "baselines.bpr.");
  c.bpr.lr = get<double>(bpr, "lr", "baselines.bpr.");
  c.bpr.l2 = get<double>(bpr, "l2", "baselines.bpr.");
  c.bpr.init_scale = get<double>(bpr, "init_scale", "baselines.bpr.");
  c.bpr.seed = get_optional<std::uint64_t>(bpr, "seed", "baselines.bpr.").value_or(c.seed);

  c.timing_repeats = get_count(j.at("eval"), "timing_repeats", "eval.");
  c.sweep_param = get<std::string>(j.at("sweep"), "param", "sweep.");
  c.sweep_values = get<std::vector<double>>(j.at("sweep"), "values", "sweep.");
  c.threads = get_count(j, "threads", "");
  return c;
}

}  // namespace

void RunConfig::validate() const {
  if (source != "synthetic" && source != "file") {
    throw ConfigError("data.source must be 'synthetic' or 'file', got '" + source + "'");
  }
  if (source == "file" && input.empty()) throw ConfigError("data.input is required when data.source is 'file'");
  if (source == "synthetic") {
    if (synthetic.num_users < 1 || synthetic.num_items < 2 || synthetic.seq_len < 1) {
      throw ConfigError("synthetic spec needs >= 1 user, >= 2 items and seq_len >= 1");
    }
    if (!(synthetic.sharpness >= 0.0 && std::isfinite(synthetic.sharpness))) {
      throw ConfigError("data.synthetic.sharpness must be a non-negative real");
    }
  }
  if (window < 1) throw ConfigError("data.window must be >= 1");
  for (double f : {splits.train, splits.validation, splits.test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (!(splits.train > 0.0)) throw ConfigError("data.splits.train must be positive");
  if (std::abs(splits.train + splits.validation + splits.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  if (teacher_dim < 1) throw ConfigError("teacher.dim must be >= 1");
  if (student_dim < 1) throw ConfigError("student.dim must be >= 1");
  teacher_config().validate();
  student_config().validate();
  if (itemcf_neighbors < 1) throw ConfigError("baselines.itemcf_neighbors must be >= 1");
  if (bpr.dim < 1) throw ConfigError("baselines.bpr.dim must be >= 1");
  if (!(bpr.lr > 0.0) || !(bpr.l2 >= 0.0) || !(bpr.init_scale >= 0.0)) {
    throw ConfigError("baselines.bpr lr must be positive, l2 and init_scale non-negative");
  }
  if (timing_repeats < 1) throw ConfigError("eval.timing_repeats must be >= 1");
  if (sweep_param != "alpha" && sweep_param != "K" && sweep_param != "lambda") {
    throw ConfigError("sweep.param must be one of alpha, K, lambda");
  }
  if (sweep_values.empty()) throw ConfigError("sweep.values is empty");
  for (double v : sweep_values) {
    if (sweep_param == "alpha" && !(v >= 0.0 && v <= 1.0)) throw ConfigError("sweep alpha outside [0, 1]");
    if (sweep_param == "K" && !(v >= 1.0 && v == std::floor(v))) {
      throw ConfigError("sweep K values must be positive integers");
    }
    if (sweep_param == "lambda" && !(v > 0.0 && std::isfinite(v))) {
      throw ConfigError("sweep lambda values must be positive");
    }
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

TrainConfig RunConfig::teacher_config() const {
  TrainConfig t = train;
  t.seed = seed + teacher_seed_offset;
  if (teacher_epochs) t.epochs = *teacher_epochs;
  if (teacher_lr) t.lr = *teacher_lr;
  if (teacher_l2) t.l2 = *teacher_l2;
  return t;
}

TrainConfig RunConfig::student_config() const { return train; }

std::string RunConfig::to_json() const {
  json j = defaults();
  auto& data = j["data"];
  data["source"] = source;
  data["input"] = input.empty() ? json(nullptr) : json(input.string());
  data["synthetic"] = {{"num_users", synthetic.num_users},
                       {"num_items", synthetic.num_items},
                       {"seq_len", synthetic.seq_len},
                       {"sharpness", synthetic.sharpness},
                       {"seed", synthetic.seed}};
  data["window"] = window;
  data["splits"] = {{"train", splits.train}, {"validation", splits.validation}, {"test", splits.test}};
  j["seed"] = seed;
  j["teacher"] = {{"dim", teacher_dim},
                  {"seed_offset", teacher_seed_offset},
                  {"epochs", teacher_epochs ? json(*teacher_epochs) : json(train.epochs)},
                  {"lr", teacher_lr ? json(*teacher_lr) : json(train.lr)},
                  {"l2", teacher_l2 ? json(*teacher_l2) : json(train.l2)}};
  j["student"] = {{"dim", student_dim}};
  j["train"] = {{"epochs", train.epochs},       {"lr", train.lr},
                {"l2", train.l2},               {"negatives", train.negatives},
                {"loss", to_string(train.loss)}, {"init_scale", train.init_scale}};
  const auto& w = train.weights;
  j["distill"] = {{"alpha", train.alpha},
                  {"K", train.K},
                  {"weighting",
                   {{"mode", to_string(w.mode)},
                    {"position_mode", to_string(w.position_mode)},
                    {"lambda", w.lambda},
                    {"rho", w.rho},
                    {"mu", w.mu},
                    {"epsilon", w.epsilon},
                    {"warmup", w.warmup}}}};
  j["baselines"] = {{"itemcf_neighbors", itemcf_neighbors},
                    {"bpr",
                     {{"dim", bpr.dim}, {"epochs", bpr.epochs}, {"lr", bpr.lr}, {"l2", bpr.l2},
                      {"init_scale", bpr.init_scale}, {"seed", bpr.seed}}}};
  j["eval"] = {{"timing_repeats", timing_repeats}};
  j["sweep"] = {{"param", sweep_param}, {"values", sweep_values}};
  j["threads"] = threads;
  return j.dump(2) + "\n";
}

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json doc = defaults();
  if (!json_text.empty()) {
    json user = json::parse(json_text, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config is not valid JSON");
    merge(doc, user, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig c = from_json(doc);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

std::string default_config_json() { return defaults().dump(2) + "\n"; }

}  // namespace rankdistill
