#include "rankdistill/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rankdistill/error.hpp"

namespace rankdistill {
namespace {

constexpr std::size_t kCutoffs[] = {3, 5, 10};

bool contains(std::span<const ItemId> sorted, ItemId item) {
  return std::binary_search(sorted.begin(), sorted.end(), item);
}

void check_cutoff(std::span<const ItemId> ranked, std::size_t n) {
  if (n < 1) throw EvalError("cutoff n must be >= 1");
  if (ranked.size() < n) {
    throw EvalError("ranked list has " + std::to_string(ranked.size()) + " items, need " +
                    std::to_string(n));
  }
}

std::string format_fixed(double x, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << x;
  return ss.str();
}

}  // namespace

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

double precision_at(std::span<const ItemId> ranked, std::span<const ItemId> relevant,
                    std::size_t n) {
  check_cutoff(ranked, n);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < n; ++p) hits += contains(relevant, ranked[p]);
  return static_cast<double>(hits) / static_cast<double>(n);
}

double ndcg_at(std::span<const ItemId> ranked, std::span<const ItemId> relevant, std::size_t n) {
  check_cutoff(ranked, n);
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    if (contains(relevant, ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t p = 0; p < std::min(n, relevant.size()); ++p) {
    idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  return dcg / idcg;
}

double average_precision(std::span<const ItemId> ranked, std::span<const ItemId> relevant) {
  if (relevant.empty()) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (contains(relevant, ranked[k])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double mean_average_precision(std::span<const std::vector<ItemId>> ranked,
                              std::span<const std::vector<ItemId>> relevant) {
  if (ranked.size() != relevant.size()) throw EvalError("rankings and relevance sets differ in count");
  CompensatedSum sum;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < ranked.size(); ++q) {
    if (relevant[q].empty()) continue;
    sum.add(average_precision(ranked[q], relevant[q]));
    ++counted;
  }
  if (counted == 0) throw EvalError("no query has a nonempty relevant set");
  return sum.value() / static_cast<double>(counted);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  nlohmann::ordered_json m;
  for (const auto& [k, v] : metrics) m[k] = v;
  j["metrics"] = m;
  j["parameter_count"] = parameter_count;
  j["embedding_parameter_count"] = embedding_parameter_count;
  j["inference_seconds"] = inference_seconds;
  j["queries"] = queries;
  j["hardware"] = hardware;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.name = j.at("name").get<std::string>();
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
  r.parameter_count = j.at("parameter_count").get<std::size_t>();
  r.embedding_parameter_count = j.at("embedding_parameter_count").get<std::size_t>();
  r.inference_seconds = j.at("inference_seconds").get<double>();
  r.queries = j.at("queries").get<std::size_t>();
  r.hardware = j.value("hardware", "");
  return r;
}

std::string hardware_string() {
  std::string cpu;
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  }
  if (cpu.empty()) cpu = "unknown cpu";
  return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " threads";
}

EvalReport evaluate_model(const Ranker& model, const Dataset& dataset, const EvalOptions& options,
                          const std::string& name) {
  struct Query {
    QueryContext context;
    std::vector<ItemId> candidates;
    const std::vector<ItemId>* relevant;
  };
  std::vector<Query> queries;
  for (UserId u = 0; u < dataset.num_users; ++u) {
    const bool test = options.split == EvalSplit::kTest;
    const auto& relevant = test ? dataset.test_items[u] : dataset.validation_items[u];
    if (relevant.empty()) continue;
    Query q;
    if (!(test ? dataset.test_context(u, q.context) : dataset.validation_context(u, q.context))) {
      continue;
    }
    const auto known = test ? dataset.train_and_validation_items(u) : dataset.train_positives[u];
    q.candidates.reserve(dataset.num_items - known.size());
    for (ItemId i = 0; i < dataset.num_items; ++i) {
      if (!contains(known, i)) q.candidates.push_back(i);
    }
    if (q.candidates.empty()) continue;
    q.relevant = &relevant;
    queries.push_back(std::move(q));
  }
  if (queries.empty()) throw EvalError("no evaluable queries for " + name);

  std::vector<std::vector<ItemId>> rankings(queries.size());
  double best_seconds = std::numeric_limits<double>::infinity();
  std::vector<double> scores;
  for (std::size_t rep = 0; rep < std::max<std::size_t>(options.timing_repeats, 1); ++rep) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& q = queries[i];
      scores.resize(q.candidates.size());
      model.score_into(q.context, q.candidates, scores);
      rankings[i] = rank_candidates(q.candidates, scores);
    }
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    best_seconds = std::min(best_seconds, took.count());
  }

  EvalReport report;
  report.name = name;
  report.parameter_count = model.parameter_count();
  report.embedding_parameter_count = model.embedding_parameter_count();
  report.inference_seconds = best_seconds;
  report.queries = queries.size();
  report.hardware = hardware_string();

  std::map<std::string, CompensatedSum> sums;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& ranked = rankings[i];
    const auto& rel = *queries[i].relevant;
    for (auto n : kCutoffs) {
      // Short candidate lists are padded with misses.
      const std::size_t cut = std::min(n, ranked.size());
      const double scale = static_cast<double>(cut) / static_cast<double>(n);
      sums["prec@" + std::to_string(n)].add(precision_at(ranked, rel, cut) * scale);
      sums["ndcg@" + std::to_string(n)].add(ndcg_at(ranked, rel, cut));
    }
    sums["map"].add(average_precision(ranked, rel));
  }
  for (const auto& [k, s] : sums) report.metrics[k] = s.value() / static_cast<double>(queries.size());
  return report;
}

double validation_map(const Ranker& model, const Dataset& dataset) {
  return evaluate_model(model, dataset, {EvalSplit::kValidation, 1}, "validation").metrics.at("map");
}

ComparisonTable compare(const std::vector<EvalReport>& reports, const std::string& reference) {
  if (reports.empty()) throw EvalError("nothing to compare");
  ComparisonTable t;
  t.reports = reports;
  auto it = std::find_if(reports.begin(), reports.end(),
                         [&](const EvalReport& r) { return r.name == reference; });
  t.reference = it == reports.end() ? 0 : static_cast<std::size_t>(it - reports.begin());
  const auto& ref = reports[t.reference];

  t.columns = {"model", "prec@3", "prec@5", "prec@10", "ndcg@3", "ndcg@5", "ndcg@10", "map",
               "params", "param_ratio", "embed_ratio", "seconds", "time_ratio"};
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  for (const auto& r : reports) {
    std::vector<std::string> row{r.name};
    for (std::size_t c = 1; c <= 7; ++c) {
      auto m = r.metrics.find(t.columns[c]);
      row.push_back(m == r.metrics.end() ? "-" : format_fixed(m->second, 4));
    }
    row.push_back(std::to_string(r.parameter_count));
    row.push_back(format_fixed(ratio(static_cast<double>(r.parameter_count),
                                     static_cast<double>(ref.parameter_count)), 4));
    row.push_back(format_fixed(ratio(static_cast<double>(r.embedding_parameter_count),
                                     static_cast<double>(ref.embedding_parameter_count)), 4));
    row.push_back(format_fixed(r.inference_seconds, 6));
    row.push_back(format_fixed(ratio(r.inference_seconds, ref.inference_seconds), 4));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string ComparisonTable::to_text() const {
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    width[c] = columns[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << "  ";
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << cells[c];
      }
    }
    out << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  out << "ratios relative to '" << rows[reference][0] << "'\n";
  return out.str();
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << cells[c];
    out << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return out.str();
}

}  // namespace rankdistill
