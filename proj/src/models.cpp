#include "rankdistill/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "rankdistill/error.hpp"

namespace rankdistill {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

template <typename Rows>
std::vector<double>& row_for(Rows& rows, ItemId item, std::size_t dim) {
  for (auto& [id, r] : rows) {
    if (id == item) return r;
  }
  rows.emplace_back(item, std::vector<double>(dim, 0.0));
  return rows.back().second;
}

bool finite_all(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<ItemId> rank_candidates(std::span<const ItemId> candidates,
                                    std::span<const double> scores) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  std::vector<ItemId> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(candidates[i]);
  return out;
}

std::size_t parameter_count(std::size_t num_users, std::size_t num_items, std::size_t dim) {
  if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
  return dim * (num_users + 2 * num_items) + num_items;
}

ScoringModel::ScoringModel(std::size_t num_users, std::size_t num_items, std::size_t dim)
    : num_users_(num_users),
      num_items_(num_items),
      dim_(dim),
      user_(num_users * dim, 0.0),
      item_in_(num_items * dim, 0.0),
      item_out_(num_items * dim, 0.0),
      bias_(num_items, 0.0) {
  if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
}

ScoringModel ScoringModel::random(std::size_t num_users, std::size_t num_items, std::size_t dim,
                                  std::uint64_t seed, double scale) {
  ScoringModel m(num_users, num_items, dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto* table : {&m.user_, &m.item_in_, &m.item_out_}) {
    for (auto& x : *table) x = dist(rng);
  }
  return m;
}

std::span<double> ScoringModel::row(std::vector<double>& table, std::size_t r) {
  if ((r + 1) * dim_ > table.size()) throw IndexError("row index out of range");
  return {table.data() + r * dim_, dim_};
}

std::span<const double> ScoringModel::row(const std::vector<double>& table,
                                          std::size_t r) const {
  if ((r + 1) * dim_ > table.size()) throw IndexError("row index out of range");
  return {table.data() + r * dim_, dim_};
}

void ScoringModel::check_query(const QueryContext& q) const {
  if (q.user >= num_users_) throw IndexError("user " + std::to_string(q.user) + " out of range");
  for (auto j : q.history) {
    if (j >= num_items_) throw IndexError("history item " + std::to_string(j) + " out of range");
  }
}

std::vector<double> ScoringModel::query_vector(const QueryContext& q) const {
  check_query(q);
  std::vector<double> h(dim_, 0.0);
  if (!q.history.empty()) {
    for (auto j : q.history) {
      const auto p = row(item_in_, j);
      for (std::size_t k = 0; k < dim_; ++k) h[k] += p[k];
    }
    const double inv = 1.0 / static_cast<double>(q.history.size());
    for (auto& x : h) x *= inv;
  }
  const auto u = row(user_, q.user);
  for (std::size_t k = 0; k < dim_; ++k) h[k] += u[k];
  return h;
}

double ScoringModel::score(const QueryContext& q, ItemId item) const {
  double out = 0.0;
  score_into(q, std::span<const ItemId>(&item, 1), std::span<double>(&out, 1));
  return out;
}

std::vector<double> ScoringModel::score_all(const QueryContext& q,
                                            std::span<const ItemId> candidates) const {
  std::vector<double> out(candidates.size());
  score_into(q, candidates, out);
  return out;
}

void ScoringModel::score_into(const QueryContext& q, std::span<const ItemId> candidates,
                              std::span<double> out) const {
  const auto h = query_vector(q);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const ItemId i = candidates[c];
    if (i >= num_items_) throw IndexError("item " + std::to_string(i) + " out of range");
    out[c] = dot(h, row(item_out_, i)) + bias_[i];
  }
}

ParamGradient ScoringModel::backward(const QueryContext& q,
                                     std::span<const ItemGrad> grads) const {
  const auto h = query_vector(q);
  ParamGradient g;
  g.user = q.user;
  g.user_row.assign(dim_, 0.0);
  // sum_i g_i * v_i, shared by the user row and every history slot.
  std::vector<double> pooled(dim_, 0.0);
  for (const auto& [item, gi] : grads) {
    if (item >= num_items_) throw IndexError("item " + std::to_string(item) + " out of range");
    const auto v = row(item_out_, item);
    auto& out_row = row_for(g.item_out_rows, item, dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      out_row[k] += gi * h[k];
      pooled[k] += gi * v[k];
    }
    auto it = std::find_if(g.bias.begin(), g.bias.end(),
                           [&](const auto& b) { return b.first == item; });
    if (it == g.bias.end()) {
      g.bias.emplace_back(item, gi);
    } else {
      it->second += gi;
    }
  }
  g.user_row = pooled;
  if (!q.history.empty()) {
    const double inv = 1.0 / static_cast<double>(q.history.size());
    for (auto j : q.history) {
      auto& in_row = row_for(g.item_in_rows, j, dim_);
      for (std::size_t k = 0; k < dim_; ++k) in_row[k] += inv * pooled[k];
    }
  }
  return g;
}

void ScoringModel::gradient_step(const QueryContext& q, std::span<const ItemGrad> grads,
                                 double lr, double l2) {
  for (const auto& [item, gi] : grads) {
    if (!std::isfinite(gi)) throw NumericError("non-finite score gradient");
  }
  if (lr == 0.0) return;
  const auto g = backward(q, grads);

  // Stage every new row first so a non-finite result leaves the model untouched.
  auto updated = [&](std::span<const double> cur, std::span<const double> grad) {
    std::vector<double> next(cur.size());
    for (std::size_t k = 0; k < cur.size(); ++k) next[k] = cur[k] - lr * (grad[k] + l2 * cur[k]);
    return next;
  };
  const auto new_user = updated(row(user_, g.user), g.user_row);
  std::vector<std::vector<double>> new_in, new_out;
  new_in.reserve(g.item_in_rows.size());
  new_out.reserve(g.item_out_rows.size());
  for (const auto& [j, gr] : g.item_in_rows) new_in.push_back(updated(row(item_in_, j), gr));
  for (const auto& [i, gr] : g.item_out_rows) new_out.push_back(updated(row(item_out_, i), gr));
  std::vector<double> new_bias;
  new_bias.reserve(g.bias.size());
  for (const auto& [i, gb] : g.bias) new_bias.push_back(bias_[i] - lr * (gb + l2 * bias_[i]));

  bool ok = finite_all(new_user) && finite_all(new_bias);
  for (const auto& r : new_in) ok = ok && finite_all(r);
  for (const auto& r : new_out) ok = ok && finite_all(r);
  if (!ok) throw NumericError("non-finite parameter update");

  std::copy(new_user.begin(), new_user.end(), row(user_, g.user).begin());
  for (std::size_t r = 0; r < new_in.size(); ++r) {
    std::copy(new_in[r].begin(), new_in[r].end(), row(item_in_, g.item_in_rows[r].first).begin());
  }
  for (std::size_t r = 0; r < new_out.size(); ++r) {
    std::copy(new_out[r].begin(), new_out[r].end(),
              row(item_out_, g.item_out_rows[r].first).begin());
  }
  for (std::size_t r = 0; r < new_bias.size(); ++r) bias_[g.bias[r].first] = new_bias[r];
}

std::size_t ScoringModel::parameter_count() const {
  return rankdistill::parameter_count(num_users_, num_items_, dim_);
}

std::size_t ScoringModel::embedding_parameter_count() const {
  return dim_ * (num_users_ + 2 * num_items_);
}

std::vector<double> ScoringModel::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto* t : {&user_, &item_in_, &item_out_, &bias_}) {
    flat.insert(flat.end(), t->begin(), t->end());
  }
  return flat;
}

void ScoringModel::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ConfigError("parameter vector size mismatch");
  auto it = flat.begin();
  for (auto* t : {&user_, &item_in_, &item_out_, &bias_}) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(t->size()), t->begin());
    it += static_cast<std::ptrdiff_t>(t->size());
  }
}

bool ScoringModel::all_finite() const {
  return finite_all(user_) && finite_all(item_in_) && finite_all(item_out_) && finite_all(bias_);
}

void save_checkpoint(const ScoringModel& model, const std::filesystem::path& dir,
                     std::uint64_t seed, const std::string& hyper_json) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["num_users"] = model.num_users();
  meta["num_items"] = model.num_items();
  meta["dim"] = model.dim();
  meta["seed"] = seed;
  meta["parameter_count"] = model.parameter_count();
  meta["layout"] = {"user", "item_in", "item_out", "bias"};
  meta["dtype"] = "float64-le";
  meta["hyper"] = nlohmann::ordered_json::parse(hyper_json);
  {
    std::ofstream out(dir / "model.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "model.json").string());
    out << meta.dump(2) << "\n";
  }
  const auto flat = model.flat_parameters();
  std::ofstream out(dir / "params.bin", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "params.bin").string());
  for (double x : flat) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw IoError("write failed for " + (dir / "params.bin").string());
}

ScoringModel load_checkpoint(const std::filesystem::path& dir) {
  for (const char* name : {"model.json", "params.bin"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw MissingArtifactError("missing checkpoint artifact " + (dir / name).string());
    }
  }
  std::ifstream meta_in(dir / "model.json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad model.json: " + std::string(e.what()));
  }
  ScoringModel m(meta.at("num_users").get<std::size_t>(), meta.at("num_items").get<std::size_t>(),
                 meta.at("dim").get<std::size_t>());
  std::ifstream in(dir / "params.bin", std::ios::binary);
  std::vector<double> flat(m.parameter_count());
  for (auto& x : flat) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("truncated params.bin");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    x = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("params.bin has trailing bytes");
  m.set_flat_parameters(flat);
  return m;
}

}  // namespace rankdistill
