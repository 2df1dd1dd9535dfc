#include "uprec/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace uprec {

using nlohmann::json;

namespace {

// Days from civil date (proleptic Gregorian), epoch 1970-01-01.
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

bool split_fields(const std::string& line, char sep, std::vector<std::string>& out) {
  out.clear();
  size_t start = 0;
  while (true) {
    size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return true;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

int64_t parse_date(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  int n = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &sec);
  if (n < 3 || y < 1970 || mo < 1 || mo > 12 || d < 1 || d > 31)
    throw DataError("unparseable date: " + s);
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
}

YelpLoadResult load_yelp(const std::string& review_path, const std::string& user_path) {
  YelpLoadResult out;

  std::ifstream reviews(review_path);
  if (!reviews) throw DataError("cannot open review file: " + review_path);
  std::string line;
  while (std::getline(reviews, line)) {
    if (strip(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    bool ok = !j.is_discarded() && j.is_object() && j.contains("user_id") &&
              j.contains("business_id") && j.contains("date") && j["user_id"].is_string() &&
              j["business_id"].is_string() && j["date"].is_string();
    if (ok) {
      RawRecord rec;
      rec.user_id = j["user_id"].get<std::string>();
      rec.item_id = j["business_id"].get<std::string>();
      try {
        rec.timestamp = parse_date(j["date"].get<std::string>());
      } catch (const DataError&) {
        ok = false;
      }
      if (ok) {
        if (j.contains("stars") && j["stars"].is_number()) rec.rating = j["stars"].get<double>();
        out.records.push_back(std::move(rec));
        continue;
      }
    }
    ++out.skipped_reviews;
  }

  out.attrs.numeric_names = {"compliments", "average_stars"};

  std::ifstream users(user_path);
  if (!users) throw DataError("cannot open user file: " + user_path);
  std::set<std::pair<std::string, std::string>> edge_set;
  while (std::getline(users, line)) {
    if (strip(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("user_id") || !j["user_id"].is_string()) {
      ++out.skipped_users;
      continue;
    }
    const std::string uid = j["user_id"].get<std::string>();

    double compliments = 0;
    bool any_compliment = false;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key().rfind("compliment_", 0) == 0 && it.value().is_number()) {
        compliments += it.value().get<double>();
        any_compliment = true;
      }
    }
    if (any_compliment) out.attrs.numeric[uid]["compliments"] = compliments;
    if (j.contains("average_stars") && j["average_stars"].is_number())
      out.attrs.numeric[uid]["average_stars"] = j["average_stars"].get<double>();

    // "friends" is either a JSON array or a comma-separated string ("None"
    // for empty). One direction in the file is enough; edges are symmetric.
    std::vector<std::string> friends;
    if (j.contains("friends")) {
      const auto& f = j["friends"];
      if (f.is_array()) {
        for (const auto& x : f)
          if (x.is_string()) friends.push_back(x.get<std::string>());
      } else if (f.is_string()) {
        std::vector<std::string> parts;
        split_fields(f.get<std::string>(), ',', parts);
        for (auto& p : parts) {
          std::string v = strip(p);
          if (!v.empty() && v != "None") friends.push_back(std::move(v));
        }
      }
    }
    for (const auto& v : friends) {
      if (v == uid) continue;
      auto e = uid < v ? std::make_pair(uid, v) : std::make_pair(v, uid);
      edge_set.insert(std::move(e));
    }
  }
  out.edges.assign(edge_set.begin(), edge_set.end());
  return out;
}

std::vector<RawRecord> load_interactions_tsv(const std::string& path, uint64_t* skipped) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file: " + path);
  std::vector<RawRecord> records;
  uint64_t bad = 0;
  std::string line;
  std::vector<std::string> f;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    split_fields(line, '\t', f);
    if (f.size() < 3) {
      ++bad;
      continue;
    }
    RawRecord rec;
    rec.user_id = strip(f[0]);
    rec.item_id = strip(f[1]);
    try {
      size_t pos = 0;
      rec.timestamp = std::stoll(strip(f[2]), &pos);
      if (rec.user_id.empty() || rec.item_id.empty() || rec.timestamp < 0) throw std::invalid_argument("");
      if (f.size() >= 4 && !strip(f[3]).empty()) rec.rating = std::stod(strip(f[3]));
    } catch (const std::exception&) {
      ++bad;
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (skipped) *skipped = bad;
  return records;
}

std::vector<std::pair<std::string, std::string>> load_edges_tsv(const std::string& path,
                                                                uint64_t* skipped) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edges file: " + path);
  std::set<std::pair<std::string, std::string>> edge_set;
  uint64_t bad = 0;
  std::string line;
  std::vector<std::string> f;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    split_fields(line, '\t', f);
    if (f.size() < 2 || strip(f[0]).empty() || strip(f[1]).empty() || strip(f[0]) == strip(f[1])) {
      ++bad;
      continue;
    }
    std::string a = strip(f[0]), b = strip(f[1]);
    edge_set.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
  }
  if (skipped) *skipped = bad;
  return {edge_set.begin(), edge_set.end()};
}

RawAttributes load_attributes_tsv(const std::string& path, uint64_t* skipped) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attributes file: " + path);
  RawAttributes raw;
  uint64_t bad = 0;
  std::string line;
  if (!std::getline(in, line)) throw DataError("attributes file empty: " + path);
  std::vector<std::string> header;
  split_fields(line, '\t', header);
  if (header.empty() || strip(header[0]) != "user")
    throw DataError("attributes header must start with 'user': " + path);
  // kind per column: 0 user, 1 numeric, 2 discrete
  std::vector<int> kind(header.size(), 0);
  std::vector<std::string> name(header.size());
  for (size_t c = 1; c < header.size(); ++c) {
    std::string h = strip(header[c]);
    if (h.rfind("n:", 0) == 0) {
      kind[c] = 1;
      name[c] = h.substr(2);
      raw.numeric_names.push_back(name[c]);
    } else if (h.rfind("d:", 0) == 0) {
      kind[c] = 2;
      name[c] = h.substr(2);
      raw.discrete_names.push_back(name[c]);
    } else {
      throw DataError("attribute column needs n:/d: prefix: " + h);
    }
  }
  std::vector<std::string> f;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    split_fields(line, '\t', f);
    if (f.empty() || strip(f[0]).empty()) {
      ++bad;
      continue;
    }
    const std::string uid = strip(f[0]);
    bool row_ok = true;
    for (size_t c = 1; c < header.size() && c < f.size(); ++c) {
      std::string v = strip(f[c]);
      if (v.empty()) continue;
      if (kind[c] == 1) {
        try {
          raw.numeric[uid][name[c]] = std::stod(v);
        } catch (const std::exception&) {
          row_ok = false;
        }
      } else {
        raw.discrete[uid][name[c]] = v;
      }
    }
    if (!row_ok) ++bad;
  }
  if (skipped) *skipped = bad;
  return raw;
}

std::vector<RawRecord> kcore_filter(std::vector<RawRecord> records, int k) {
  if (k < 1) throw DataError("k-core requires k >= 1");
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<std::string, int> user_count, item_count;
    for (const auto& r : records) {
      ++user_count[r.user_id];
      ++item_count[r.item_id];
    }
    std::vector<RawRecord> kept;
    kept.reserve(records.size());
    for (auto& r : records) {
      if (user_count[r.user_id] >= k && item_count[r.item_id] >= k)
        kept.push_back(std::move(r));
      else
        changed = true;
    }
    records = std::move(kept);
  }
  if (records.empty()) throw DataError("dataset too sparse: nothing survives " +
                                       std::to_string(k) + "-core filtering");
  return records;
}

std::unordered_set<std::string> partition_eval_users(const std::vector<RawRecord>& records,
                                                     double eval_fraction, uint64_t seed) {
  std::vector<std::string> users;
  std::unordered_set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.user_id).second) users.push_back(r.user_id);
  Rng rng = derive_rng(seed, 0x90f7);
  for (size_t i = users.size(); i > 1; --i)
    std::swap(users[i - 1], users[uniform_index(rng, i)]);
  size_t n_eval = static_cast<size_t>(std::floor(eval_fraction * static_cast<double>(users.size())));
  return {users.begin(), users.begin() + n_eval};
}

std::vector<uint8_t> partition_eval_edges(const SocialGraph& graph, double fraction,
                                          uint64_t seed) {
  size_t n = graph.edges().size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = derive_rng(seed, 0xed6e);
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  size_t n_eval = static_cast<size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<uint8_t> mask(n, 0);
  for (size_t i = 0; i < n_eval; ++i) mask[order[i]] = 1;
  return mask;
}

InteractionDataset build_dataset(const std::vector<RawRecord>& records,
                                 std::optional<int64_t> cutoff,
                                 const std::unordered_set<std::string>& eval_users) {
  std::vector<const RawRecord*> kept;
  kept.reserve(records.size());
  for (const auto& r : records)
    if (!cutoff || r.timestamp >= *cutoff) kept.push_back(&r);
  if (kept.empty()) throw DataError("no records remain after cutoff");

  InteractionDataset ds;
  // First-occurrence order over the filtered stream; items only from
  // non-eval users so the vocabulary reflects training data.
  std::vector<std::vector<const RawRecord*>> per_user;
  for (const auto* r : kept) {
    int32_t u = ds.users.add(r->user_id);
    if (u == static_cast<int32_t>(per_user.size())) per_user.emplace_back();
    per_user[u].push_back(r);
    if (!eval_users.count(r->user_id)) ds.items.add(r->item_id);
  }

  ds.sequences.resize(ds.n_users());
  ds.is_eval_user.assign(ds.n_users(), 0);
  for (int32_t u = 0; u < ds.n_users(); ++u) {
    auto& recs = per_user[u];
    std::stable_sort(recs.begin(), recs.end(),
                     [](const RawRecord* a, const RawRecord* b) { return a->timestamp < b->timestamp; });
    bool is_eval = eval_users.count(ds.users.id_of(u)) > 0;
    ds.is_eval_user[u] = is_eval ? 1 : 0;
    auto& seq = ds.sequences[u];
    seq.reserve(recs.size());
    for (const auto* r : recs) {
      int32_t item = ds.items.lookup(r->item_id);
      if (item < 0) continue;  // eval-user item unseen in training data
      seq.push_back(item);
    }
  }

  // Popularity over training subsequences of training users.
  ds.popularity.assign(ds.vocab_size(), 0);
  for (int32_t u = 0; u < ds.n_users(); ++u) {
    if (ds.eval_user(u)) continue;
    const auto& seq = ds.sequences[u];
    size_t train_len = seq.size() >= 3 ? seq.size() - 2 : seq.size();
    for (size_t i = 0; i < train_len; ++i) ++ds.popularity[seq[i]];
  }
  return ds;
}

SocialGraph build_graph(const std::vector<std::pair<std::string, std::string>>& edges,
                        const InteractionDataset& ds) {
  SocialGraph g;
  g.resize(ds.n_users());
  for (const auto& [a, b] : edges) {
    int32_t u = ds.users.lookup(a);
    int32_t v = ds.users.lookup(b);
    if (u < 0 || v < 0 || u == v) continue;
    g.add_edge(u, v);
  }
  return g;
}

void build_attributes(const RawAttributes& raw, const InteractionDataset& ds,
                      AttributeSchema& schema_out, AttributeTable& table_out) {
  schema_out = AttributeSchema{};
  schema_out.numeric_names = raw.numeric_names;
  schema_out.discrete_names = raw.discrete_names;

  // Discrete labels in first-occurrence order over users by index.
  schema_out.discrete_labels.resize(raw.discrete_names.size());
  schema_out.discrete_cardinalities.assign(raw.discrete_names.size(), 0);
  for (size_t a = 0; a < raw.discrete_names.size(); ++a) {
    const auto& aname = raw.discrete_names[a];
    std::map<std::string, int32_t> label_index;
    for (int32_t u = 0; u < ds.n_users(); ++u) {
      auto itu = raw.discrete.find(ds.users.id_of(u));
      if (itu == raw.discrete.end()) continue;
      auto itv = itu->second.find(aname);
      if (itv == itu->second.end()) continue;
      if (label_index.emplace(itv->second, static_cast<int32_t>(schema_out.discrete_labels[a].size())).second)
        schema_out.discrete_labels[a].push_back(itv->second);
    }
    while (schema_out.discrete_labels[a].size() < 2)
      schema_out.discrete_labels[a].push_back("_unused" + std::to_string(schema_out.discrete_labels[a].size()));
    schema_out.discrete_cardinalities[a] = static_cast<int32_t>(schema_out.discrete_labels[a].size());
  }
  schema_out.validate();

  table_out.resize(ds.n_users(), schema_out);
  for (int32_t u = 0; u < ds.n_users(); ++u) {
    const std::string& uid = ds.users.id_of(u);
    if (auto itu = raw.numeric.find(uid); itu != raw.numeric.end()) {
      for (size_t a = 0; a < schema_out.numeric_names.size(); ++a) {
        auto itv = itu->second.find(schema_out.numeric_names[a]);
        if (itv == itu->second.end()) continue;
        table_out.numeric_values[u][a] = itv->second;
        table_out.numeric_present[u][a] = 1;
      }
    }
    if (auto itu = raw.discrete.find(uid); itu != raw.discrete.end()) {
      for (size_t a = 0; a < schema_out.discrete_names.size(); ++a) {
        auto itv = itu->second.find(schema_out.discrete_names[a]);
        if (itv == itu->second.end()) continue;
        const auto& labels = schema_out.discrete_labels[a];
        auto pos = std::find(labels.begin(), labels.end(), itv->second);
        table_out.discrete_values[u][a] = static_cast<int32_t>(pos - labels.begin());
        table_out.discrete_present[u][a] = 1;
      }
    }
  }
}

LeaveOneOutSplit split_leave_one_out(const InteractionDataset& ds) {
  LeaveOneOutSplit split;
  split.valid_target.assign(ds.n_users(), -1);
  split.test_target.assign(ds.n_users(), -1);
  for (int32_t u = 0; u < ds.n_users(); ++u) {
    const auto& seq = ds.sequences[u];
    if (seq.size() < 3) {
      ++split.excluded;
      continue;
    }
    split.valid_target[u] = seq[seq.size() - 2];
    split.test_target[u] = seq[seq.size() - 1];
  }
  return split;
}

std::vector<int32_t> sample_eval_negatives(int32_t target, const std::vector<uint64_t>& popularity,
                                           int n, const std::unordered_set<int32_t>& user_history,
                                           Rng& rng) {
  // Weighted sampling without replacement via exponential keys: item i gets
  // key log(u_i)/w_i and the n largest keys are the successive draws.
  struct Keyed {
    double key;
    int32_t item;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(popularity.size());
  for (int32_t i = kNumSpecialTokens; i < static_cast<int32_t>(popularity.size()); ++i) {
    const uint64_t w = popularity[i];
    double u = uniform01(rng);  // consumed for every item so draws stay aligned
    if (w == 0 || i == target || user_history.count(i)) continue;
    if (u < 1e-300) u = 1e-300;
    keyed.push_back({std::log(u) / static_cast<double>(w), i});
  }
  if (static_cast<int>(keyed.size()) < n)
    throw DataError("insufficient eligible items for negative sampling: have " +
                    std::to_string(keyed.size()) + ", need " + std::to_string(n));
  auto better = [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key > b.key : a.item < b.item;
  };
  std::partial_sort(keyed.begin(), keyed.begin() + n, keyed.end(), better);
  std::vector<int32_t> out(n);
  for (int i = 0; i < n; ++i) out[i] = keyed[i].item;
  return out;
}

}  // namespace uprec
