#include "uprec/data.hpp"

#include <algorithm>
#include <set>

#include "uprec/serialize.hpp"

namespace uprec {

int32_t Vocab::add(const std::string& id) {
  auto it = index_.find(id);
  if (it != index_.end()) return it->second;
  int32_t idx = offset_ + static_cast<int32_t>(ids_.size());
  ids_.push_back(id);
  index_.emplace(id, idx);
  return idx;
}

int32_t Vocab::lookup(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocab::id_of(int32_t index) const {
  int32_t i = index - offset_;
  if (i < 0 || i >= static_cast<int32_t>(ids_.size()))
    throw DataError("vocab index out of range: " + std::to_string(index));
  return ids_[i];
}

uint64_t InteractionDataset::n_interactions() const {
  uint64_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

std::vector<int32_t> InteractionDataset::train_prefix(int32_t u) const {
  const auto& seq = sequences[u];
  if (seq.size() < 3) return seq;
  return std::vector<int32_t>(seq.begin(), seq.end() - 2);
}

void SocialGraph::resize(int32_t n_users) { adj_.resize(n_users); }

void SocialGraph::add_edge(int32_t u, int32_t v) {
  if (u == v) return;
  if (u < 0 || v < 0 || u >= n_users() || v >= n_users())
    throw DataError("edge endpoint out of range");
  auto& au = adj_[u];
  auto it = std::lower_bound(au.begin(), au.end(), v);
  if (it != au.end() && *it == v) return;
  au.insert(it, v);
  auto& av = adj_[v];
  av.insert(std::lower_bound(av.begin(), av.end(), u), u);
  ++n_edges_;
}

bool SocialGraph::has_edge(int32_t u, int32_t v) const {
  ++reads_;
  if (u < 0 || u >= n_users()) return false;
  const auto& au = adj_[u];
  return std::binary_search(au.begin(), au.end(), v);
}

const std::vector<int32_t>& SocialGraph::neighbors(int32_t u) const {
  ++reads_;
  if (u < 0 || u >= n_users()) throw DataError("user index out of range");
  return adj_[u];
}

std::vector<int32_t> SocialGraph::two_hop_neighbors(int32_t u) const {
  ++reads_;
  if (u < 0 || u >= n_users()) throw DataError("user index out of range");
  std::set<int32_t> out(adj_[u].begin(), adj_[u].end());
  for (int32_t v : adj_[u]) out.insert(adj_[v].begin(), adj_[v].end());
  out.erase(u);
  return std::vector<int32_t>(out.begin(), out.end());
}

std::vector<std::pair<int32_t, int32_t>> SocialGraph::edges() const {
  ++reads_;
  std::vector<std::pair<int32_t, int32_t>> es;
  es.reserve(n_edges_);
  for (int32_t u = 0; u < n_users(); ++u)
    for (int32_t v : adj_[u])
      if (u < v) es.emplace_back(u, v);
  return es;
}

int AttributeSchema::find_numeric(const std::string& name) const {
  for (size_t i = 0; i < numeric_names.size(); ++i)
    if (numeric_names[i] == name) return static_cast<int>(i);
  return -1;
}

int AttributeSchema::find_discrete(const std::string& name) const {
  for (size_t i = 0; i < discrete_names.size(); ++i)
    if (discrete_names[i] == name) return static_cast<int>(i);
  return -1;
}

void AttributeSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& n : numeric_names)
    if (!seen.insert(n).second) throw DataError("duplicate attribute name: " + n);
  for (const auto& n : discrete_names)
    if (!seen.insert(n).second) throw DataError("duplicate attribute name: " + n);
  if (discrete_cardinalities.size() != discrete_names.size())
    throw DataError("discrete cardinalities do not match names");
  for (int32_t c : discrete_cardinalities)
    if (c < 2) throw DataError("discrete attribute cardinality must be >= 2");
}

void AttributeTable::resize(int32_t n_users, const AttributeSchema& schema) {
  numeric_values.assign(n_users, std::vector<double>(schema.n_numeric(), 0.0));
  numeric_present.assign(n_users, std::vector<uint8_t>(schema.n_numeric(), 0));
  discrete_values.assign(n_users, std::vector<int32_t>(schema.n_discrete(), 0));
  discrete_present.assign(n_users, std::vector<uint8_t>(schema.n_discrete(), 0));
}

namespace {
constexpr char kMagic[8] = {'U', 'P', 'R', 'E', 'C', 'D', 'S', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_dataset(const std::string& path, const DatasetBundle& bundle) {
  BinaryWriter w(path);
  w.bytes(kMagic, 8);
  w.u32(kVersion);

  const auto& ds = bundle.ds;
  w.u64(static_cast<uint64_t>(ds.n_users()));
  for (int32_t u = 0; u < ds.n_users(); ++u) w.str(ds.users.id_of(u));
  w.u8_vec(ds.is_eval_user);
  w.u64(static_cast<uint64_t>(ds.n_items()));
  for (int32_t i = 0; i < ds.n_items(); ++i) w.str(ds.items.id_of(kNumSpecialTokens + i));
  w.u64(static_cast<uint64_t>(ds.sequences.size()));
  for (const auto& s : ds.sequences) w.i32_vec(s);
  w.u64_vec(ds.popularity);

  auto es = bundle.graph.edges();
  w.u64(es.size());
  for (auto [u, v] : es) {
    w.i32(u);
    w.i32(v);
  }

  const auto& sc = bundle.schema;
  w.u64(sc.numeric_names.size());
  for (const auto& n : sc.numeric_names) w.str(n);
  w.u64(sc.discrete_names.size());
  for (size_t i = 0; i < sc.discrete_names.size(); ++i) {
    w.str(sc.discrete_names[i]);
    w.i32(sc.discrete_cardinalities[i]);
    const auto& labels = i < sc.discrete_labels.size() ? sc.discrete_labels[i] : std::vector<std::string>{};
    w.u64(labels.size());
    for (const auto& l : labels) w.str(l);
  }

  const auto& at = bundle.attrs;
  w.u64(static_cast<uint64_t>(at.n_users()));
  for (int32_t u = 0; u < at.n_users(); ++u) {
    w.f64_vec(at.numeric_values[u]);
    w.u8_vec(at.numeric_present[u]);
    w.i32_vec(at.discrete_values[u]);
    w.u8_vec(at.discrete_present[u]);
  }

  w.i32_vec(bundle.split.valid_target);
  w.i32_vec(bundle.split.test_target);
  w.i32(bundle.split.excluded);
  if (!bundle.is_eval_edge.empty() && bundle.is_eval_edge.size() != es.size())
    throw DataError("edge partition does not match edge count");
  w.u8_vec(bundle.is_eval_edge);
  if (!w.good()) throw DataError("write failed: " + path);
}

DatasetBundle load_dataset(const std::string& path) {
  BinaryReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw DataError("bad dataset magic: " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("unsupported dataset version " + std::to_string(version) + ": " + path);

  DatasetBundle b;
  auto& ds = b.ds;
  uint64_t nu = r.u64();
  for (uint64_t i = 0; i < nu; ++i) ds.users.add(r.str());
  ds.is_eval_user = r.u8_vec();
  uint64_t ni = r.u64();
  for (uint64_t i = 0; i < ni; ++i) ds.items.add(r.str());
  uint64_t ns = r.u64();
  ds.sequences.resize(ns);
  for (auto& s : ds.sequences) s = r.i32_vec();
  ds.popularity = r.u64_vec();

  b.graph.resize(static_cast<int32_t>(nu));
  uint64_t ne = r.u64();
  for (uint64_t i = 0; i < ne; ++i) {
    int32_t u = r.i32();
    int32_t v = r.i32();
    b.graph.add_edge(u, v);
  }

  uint64_t nn = r.u64();
  for (uint64_t i = 0; i < nn; ++i) b.schema.numeric_names.push_back(r.str());
  uint64_t nd = r.u64();
  for (uint64_t i = 0; i < nd; ++i) {
    b.schema.discrete_names.push_back(r.str());
    b.schema.discrete_cardinalities.push_back(r.i32());
    uint64_t nl = r.u64();
    std::vector<std::string> labels(nl);
    for (auto& l : labels) l = r.str();
    b.schema.discrete_labels.push_back(std::move(labels));
  }

  uint64_t na = r.u64();
  b.attrs.numeric_values.resize(na);
  b.attrs.numeric_present.resize(na);
  b.attrs.discrete_values.resize(na);
  b.attrs.discrete_present.resize(na);
  for (uint64_t u = 0; u < na; ++u) {
    b.attrs.numeric_values[u] = r.f64_vec();
    b.attrs.numeric_present[u] = r.u8_vec();
    b.attrs.discrete_values[u] = r.i32_vec();
    b.attrs.discrete_present[u] = r.u8_vec();
  }

  b.split.valid_target = r.i32_vec();
  b.split.test_target = r.i32_vec();
  b.split.excluded = r.i32();
  b.is_eval_edge = r.u8_vec();
  return b;
}

std::vector<std::pair<int32_t, int32_t>> DatasetBundle::pretrain_edges() const {
  auto all = graph.edges();
  if (is_eval_edge.empty()) return all;
  std::vector<std::pair<int32_t, int32_t>> out;
  for (size_t i = 0; i < all.size(); ++i)
    if (!is_eval_edge[i]) out.push_back(all[i]);
  return out;
}

std::vector<std::pair<int32_t, int32_t>> DatasetBundle::eval_edges() const {
  auto all = graph.edges();
  std::vector<std::pair<int32_t, int32_t>> out;
  for (size_t i = 0; i < all.size() && i < is_eval_edge.size(); ++i)
    if (is_eval_edge[i]) out.push_back(all[i]);
  return out;
}

}  // namespace uprec
