#include "rankdistill/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string_view>

#include "json.hpp"
#include "rankdistill/error.hpp"

namespace rankdistill {
namespace {

bool parse_int(std::string_view field, std::int64_t& out) {
  if (field.empty()) return false;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::vector<std::int64_t> sorted_unique(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<ItemId> sorted_unique_items(std::span<const ItemId> items) {
  std::vector<ItemId> v(items.begin(), items.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Ceiling that ignores floating-point dust such as 0.1 * 30 = 3.0000000000000004.
std::size_t ceil_count(double x) {
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string join_items(std::span<const ItemId> items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(items[i]);
  }
  return s;
}

}  // namespace

std::size_t Dataset::num_interactions() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.items.size();
  return n;
}

bool Dataset::validation_context(UserId user, QueryContext& out) const {
  const auto& split = user_splits.at(user);
  if (split.train_end < window) return false;
  const auto& items = sequences[user].items;
  out.user = user;
  out.history.assign(items.begin() + static_cast<std::ptrdiff_t>(split.train_end - window),
                     items.begin() + static_cast<std::ptrdiff_t>(split.train_end));
  return true;
}

bool Dataset::test_context(UserId user, QueryContext& out) const {
  const auto& split = user_splits.at(user);
  if (split.validation_end < window) return false;
  const auto& items = sequences[user].items;
  out.user = user;
  out.history.assign(
      items.begin() + static_cast<std::ptrdiff_t>(split.validation_end - window),
      items.begin() + static_cast<std::ptrdiff_t>(split.validation_end));
  return true;
}

std::vector<ItemId> Dataset::train_and_validation_items(UserId user) const {
  std::vector<ItemId> out;
  const auto& a = train_positives.at(user);
  const auto& b = validation_items.at(user);
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

InteractionLog parse_interactions(const std::string& text) {
  struct Row {
    std::int64_t user, item, ts;
  };
  std::vector<Row> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::array<std::string_view, 3> fields;
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      if (count == fields.size()) throw ParseError(line_no, "expected 3 tab-separated fields");
      fields[count++] = line.substr(start, tab == std::string_view::npos ? tab : tab - start);
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (count != 3) throw ParseError(line_no, "expected 3 tab-separated fields");
    Row row{};
    if (!parse_int(fields[0], row.user) || !parse_int(fields[1], row.item) ||
        !parse_int(fields[2], row.ts)) {
      throw ParseError(line_no, "fields must be base-10 integers");
    }
    if (row.user < 0 || row.item < 0) throw ParseError(line_no, "ids must be non-negative");
    rows.push_back(row);
  }
  if (rows.empty()) throw EmptyDatasetError("no interactions in input");

  std::vector<std::int64_t> users, items;
  users.reserve(rows.size());
  items.reserve(rows.size());
  for (const auto& r : rows) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  InteractionLog log;
  log.ids.users = sorted_unique(std::move(users));
  log.ids.items = sorted_unique(std::move(items));
  auto dense = [](const std::vector<std::int64_t>& table, std::int64_t raw) {
    return static_cast<std::uint32_t>(std::lower_bound(table.begin(), table.end(), raw) -
                                      table.begin());
  };
  log.interactions.reserve(rows.size());
  for (const auto& r : rows) {
    log.interactions.push_back({dense(log.ids.users, r.user), dense(log.ids.items, r.item), r.ts});
  }
  return log;
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("input not found: " + path.string());
  return parse_interactions(read_file(path));
}

InteractionLog make_log(std::vector<Interaction> interactions, std::size_t num_users,
                        std::size_t num_items) {
  InteractionLog log;
  log.interactions = std::move(interactions);
  log.ids.users.resize(num_users);
  log.ids.items.resize(num_items);
  for (std::size_t i = 0; i < num_users; ++i) log.ids.users[i] = static_cast<std::int64_t>(i);
  for (std::size_t i = 0; i < num_items; ++i) log.ids.items[i] = static_cast<std::int64_t>(i);
  return log;
}

std::vector<UserSequence> group_sequences(std::span<const Interaction> interactions,
                                          std::size_t num_users) {
  std::vector<std::vector<const Interaction*>> by_user(num_users);
  for (const auto& it : interactions) {
    if (it.user >= num_users) throw IndexError("user id out of range");
    by_user[it.user].push_back(&it);
  }
  std::vector<UserSequence> out(num_users);
  for (std::size_t u = 0; u < num_users; ++u) {
    auto& rows = by_user[u];
    std::stable_sort(rows.begin(), rows.end(), [](const Interaction* a, const Interaction* b) {
      return a->timestamp < b->timestamp;
    });
    out[u].user = static_cast<UserId>(u);
    out[u].items.reserve(rows.size());
    for (const auto* r : rows) out[u].items.push_back(r->item);
  }
  return out;
}

UserSplit split_user(std::size_t n, const SplitFractions& splits) {
  UserSplit s;
  s.size = n;
  s.train_end = std::min(n, ceil_count(splits.train * static_cast<double>(n)));
  s.validation_end =
      std::min(n, s.train_end + ceil_count(splits.validation * static_cast<double>(n)));
  return s;
}

Dataset build_dataset(std::span<const Interaction> interactions, std::size_t num_users,
                      std::size_t num_items, std::size_t window, const SplitFractions& splits) {
  if (window == 0) throw ConfigError("window length L must be >= 1");
  if (splits.train < 0 || splits.validation < 0 || splits.test < 0 ||
      std::abs(splits.train + splits.validation + splits.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  for (const auto& it : interactions) {
    if (it.item >= num_items) throw IndexError("item id out of range");
  }

  Dataset ds;
  ds.num_users = num_users;
  ds.num_items = num_items;
  ds.window = window;
  ds.splits = splits;
  ds.sequences = group_sequences(interactions, num_users);
  ds.user_splits.resize(num_users);
  ds.train_positives.resize(num_users);
  ds.validation_items.resize(num_users);
  ds.test_items.resize(num_users);

  for (std::size_t u = 0; u < num_users; ++u) {
    const auto& items = ds.sequences[u].items;
    const UserSplit split = split_user(items.size(), splits);
    ds.user_splits[u] = split;
    const std::span<const ItemId> all(items);

    ds.train_positives[u] = sorted_unique_items(all.subspan(0, split.train_end));
    ds.validation_items[u] =
        sorted_unique_items(all.subspan(split.train_end, split.validation_end - split.train_end));
    ds.test_items[u] = sorted_unique_items(all.subspan(split.validation_end));

    auto emit = [&](std::size_t t, std::vector<LabeledQuery>& into) {
      LabeledQuery q;
      q.context.user = static_cast<UserId>(u);
      q.context.history.assign(all.begin() + static_cast<std::ptrdiff_t>(t - window),
                               all.begin() + static_cast<std::ptrdiff_t>(t));
      q.target = all[t];
      into.push_back(std::move(q));
    };
    for (std::size_t t = window; t < split.train_end; ++t) emit(t, ds.train);
    for (std::size_t t = std::max(window, split.train_end); t < split.validation_end; ++t) {
      emit(t, ds.validation);
    }
  }
  return ds;
}

std::vector<double> synthetic_transitions(const SyntheticSpec& spec) {
  if (spec.num_users == 0 || spec.num_items == 0 || spec.seq_len == 0) {
    throw ConfigError("synthetic counts must be >= 1");
  }
  if (!(spec.sharpness >= 0.0) || !std::isfinite(spec.sharpness)) {
    throw ConfigError("synthetic sharpness must be finite and non-negative");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = spec.num_items;
  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = p.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = spec.sharpness * normal(rng);
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  }
  return p;
}

std::vector<Interaction> generate_synthetic(const SyntheticSpec& spec) {
  const auto p = synthetic_transitions(spec);
  const std::size_t n = spec.num_items;
  std::vector<std::discrete_distribution<ItemId>> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows.emplace_back(p.begin() + static_cast<std::ptrdiff_t>(i * n),
                      p.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  }
  // Separate stream from the chain construction so changing seq_len or num_users
  // leaves the chain itself untouched.
  std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_int_distribution<ItemId> start(0, static_cast<ItemId>(n - 1));

  std::vector<Interaction> out;
  out.reserve(spec.num_users * spec.seq_len);
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    ItemId cur = start(rng);
    for (std::size_t t = 0; t < spec.seq_len; ++t) {
      out.push_back({static_cast<UserId>(u), cur, static_cast<std::int64_t>(t)});
      cur = rows[cur](rng);
    }
  }
  return out;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats s;
  s.users = dataset.num_users;
  s.items = dataset.num_items;
  s.interactions = dataset.num_interactions();
  s.avg_actions_per_user =
      s.users ? static_cast<double>(s.interactions) / static_cast<double>(s.users) : 0.0;
  s.train_pairs = dataset.train.size();
  const double cells = static_cast<double>(s.users) * static_cast<double>(s.items);
  s.sparsity = cells > 0 ? 1.0 - static_cast<double>(s.interactions) / cells : 0.0;
  return s;
}

void save_dataset(const Dataset& dataset, const InteractionLog& log, std::uint64_t seed,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto stats = dataset_stats(dataset);
  nlohmann::ordered_json meta;
  meta["num_users"] = dataset.num_users;
  meta["num_items"] = dataset.num_items;
  meta["num_interactions"] = stats.interactions;
  meta["train_pairs"] = dataset.train.size();
  meta["validation_pairs"] = dataset.validation.size();
  meta["window"] = dataset.window;
  meta["splits"] = {dataset.splits.train, dataset.splits.validation, dataset.splits.test};
  meta["seed"] = seed;
  write_file(dir / "meta.json", meta.dump(2) + "\n");

  auto pairs_tsv = [](const std::vector<LabeledQuery>& qs) {
    std::string s;
    for (const auto& q : qs) {
      s += std::to_string(q.context.user) + '\t' + join_items(q.context.history) + '\t' +
           std::to_string(q.target) + '\n';
    }
    return s;
  };
  write_file(dir / "train.tsv", pairs_tsv(dataset.train));
  write_file(dir / "valid.tsv", pairs_tsv(dataset.validation));

  std::string test;
  for (std::size_t u = 0; u < dataset.num_users; ++u) {
    const auto& seq = dataset.sequences[u].items;
    for (std::size_t t = dataset.user_splits[u].validation_end; t < seq.size(); ++t) {
      test += std::to_string(u) + '\t' + std::to_string(seq[t]) + '\n';
    }
  }
  write_file(dir / "test.tsv", test);

  std::string idmap;
  for (std::size_t i = 0; i < log.ids.users.size(); ++i) {
    idmap += "user\t" + std::to_string(i) + '\t' + std::to_string(log.ids.users[i]) + '\n';
  }
  for (std::size_t i = 0; i < log.ids.items.size(); ++i) {
    idmap += "item\t" + std::to_string(i) + '\t' + std::to_string(log.ids.items[i]) + '\n';
  }
  write_file(dir / "idmap.tsv", idmap);

  std::string rows;
  for (const auto& it : log.interactions) {
    rows += std::to_string(it.user) + '\t' + std::to_string(it.item) + '\t' +
            std::to_string(it.timestamp) + '\n';
  }
  write_file(dir / "interactions.tsv", rows);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  for (const char* name : {"meta.json", "interactions.tsv"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw MissingArtifactError("missing dataset artifact " + (dir / name).string());
    }
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad meta.json: " + std::string(e.what()));
  }
  const auto log = parse_interactions(read_file(dir / "interactions.tsv"));
  // interactions.tsv is already dense; keep the declared universe sizes.
  const std::size_t users = meta.at("num_users").get<std::size_t>();
  const std::size_t items = meta.at("num_items").get<std::size_t>();
  std::vector<Interaction> rows;
  rows.reserve(log.interactions.size());
  for (const auto& it : log.interactions) {
    rows.push_back({static_cast<UserId>(log.ids.users[it.user]),
                    static_cast<ItemId>(log.ids.items[it.item]), it.timestamp});
  }
  const auto& s = meta.at("splits");
  return build_dataset(rows, users, items, meta.at("window").get<std::size_t>(),
                       {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
}

}  // namespace rankdistill
