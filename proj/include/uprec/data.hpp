#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "uprec/common.hpp"

namespace uprec {

struct RawRecord {
  std::string user_id;
  std::string item_id;
  int64_t timestamp = 0;  // seconds since epoch, >= 0
  std::optional<double> rating;
};

// Bijection between opaque string ids and dense indices, in first-occurrence
// order. Item indices are offset by the reserved special tokens.
class Vocab {
 public:
  explicit Vocab(int32_t index_offset = 0) : offset_(index_offset) {}

  int32_t add(const std::string& id);           // inserts if absent
  int32_t lookup(const std::string& id) const;  // -1 if absent
  const std::string& id_of(int32_t index) const;
  int32_t size() const { return static_cast<int32_t>(ids_.size()); }
  int32_t offset() const { return offset_; }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

 private:
  int32_t offset_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int32_t> index_;
};

struct InteractionDataset {
  Vocab users{0};
  Vocab items{kNumSpecialTokens};
  // Per-user item token indices in ascending timestamp order.
  std::vector<std::vector<int32_t>> sequences;
  // Per-item occurrence count over training subsequences (sequence minus the
  // held-out last two positions when length >= 3). Indexed by item token id.
  std::vector<uint64_t> popularity;
  // 90/10 partition: true marks users held out for profile/SRD evaluation.
  std::vector<uint8_t> is_eval_user;

  int32_t n_users() const { return users.size(); }
  int32_t n_items() const { return items.size(); }
  int32_t vocab_size() const { return items.size() + kNumSpecialTokens; }
  uint64_t n_interactions() const;
  bool eval_user(int32_t u) const { return !is_eval_user.empty() && is_eval_user[u] != 0; }
  // Training subsequence: everything except the held-out valid/test targets.
  std::vector<int32_t> train_prefix(int32_t u) const;
};

// Undirected user-user relations over dataset user indices.
class SocialGraph {
 public:
  void resize(int32_t n_users);
  void add_edge(int32_t u, int32_t v);  // ignores self-loops and duplicates
  bool has_edge(int32_t u, int32_t v) const;
  const std::vector<int32_t>& neighbors(int32_t u) const;
  std::vector<int32_t> two_hop_neighbors(int32_t u) const;  // distance <= 2, sorted
  std::vector<std::pair<int32_t, int32_t>> edges() const;   // canonical u < v, sorted
  int32_t n_users() const { return static_cast<int32_t>(adj_.size()); }
  size_t n_edges() const { return n_edges_; }

  // Number of adjacency queries served; lets tests assert that ablated
  // training never touches the graph.
  uint64_t read_count() const { return reads_; }
  void reset_read_count() { reads_ = 0; }

 private:
  std::vector<std::vector<int32_t>> adj_;  // sorted
  size_t n_edges_ = 0;
  mutable uint64_t reads_ = 0;
};

struct AttributeSchema {
  std::vector<std::string> numeric_names;
  std::vector<std::string> discrete_names;
  std::vector<int32_t> discrete_cardinalities;
  // Category labels per discrete attribute, index -> original string value.
  std::vector<std::vector<std::string>> discrete_labels;

  int n_numeric() const { return static_cast<int>(numeric_names.size()); }
  int n_discrete() const { return static_cast<int>(discrete_names.size()); }
  int find_numeric(const std::string& name) const;   // -1 if absent
  int find_discrete(const std::string& name) const;  // -1 if absent
  void validate() const;
};

struct AttributeTable {
  // [user][attr]; mask entries are 0 where the value is missing.
  std::vector<std::vector<double>> numeric_values;
  std::vector<std::vector<uint8_t>> numeric_present;
  std::vector<std::vector<int32_t>> discrete_values;
  std::vector<std::vector<uint8_t>> discrete_present;

  int32_t n_users() const { return static_cast<int32_t>(numeric_values.size()); }
  void resize(int32_t n_users, const AttributeSchema& schema);
  bool has_numeric(int32_t u, int a) const { return numeric_present[u][a] != 0; }
  bool has_discrete(int32_t u, int a) const { return discrete_present[u][a] != 0; }
};

struct LeaveOneOutSplit {
  // Indexed by user; valid/test are -1 for sequences shorter than 3, which
  // are excluded from evaluation.
  std::vector<int32_t> valid_target;
  std::vector<int32_t> test_target;
  int32_t excluded = 0;  // users too short to evaluate

  bool has_eval(int32_t u) const { return valid_target[u] >= 0; }
};

// Everything the pipeline persists as one artifact.
struct DatasetBundle {
  InteractionDataset ds;
  SocialGraph graph;
  AttributeSchema schema;
  AttributeTable attrs;
  LeaveOneOutSplit split;
  // Aligned with graph.edges() canonical order: marks edges held out from
  // pre-training for relation-detection evaluation.
  std::vector<uint8_t> is_eval_edge;

  std::vector<std::pair<int32_t, int32_t>> pretrain_edges() const;
  std::vector<std::pair<int32_t, int32_t>> eval_edges() const;
};

// Versioned binary container (magic + version header).
void save_dataset(const std::string& path, const DatasetBundle& bundle);
DatasetBundle load_dataset(const std::string& path);

}  // namespace uprec
