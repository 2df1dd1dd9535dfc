#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "uprec/data.hpp"
#include "uprec/rng.hpp"

namespace uprec {

// Raw (string-keyed) attribute values before users are mapped to indices.
struct RawAttributes {
  std::vector<std::string> numeric_names;
  std::vector<std::string> discrete_names;
  // user id -> values aligned with the name lists; missing entries absent.
  std::map<std::string, std::map<std::string, double>> numeric;
  std::map<std::string, std::map<std::string, std::string>> discrete;
};

struct YelpLoadResult {
  std::vector<RawRecord> records;
  std::vector<std::pair<std::string, std::string>> edges;  // symmetrized, deduped
  RawAttributes attrs;
  uint64_t skipped_reviews = 0;
  uint64_t skipped_users = 0;
};

// "YYYY-MM-DD" or "YYYY-MM-DD HH:MM:SS" -> seconds since epoch (UTC).
int64_t parse_date(const std::string& s);

// YELP academic dump: one JSON object per line. Malformed lines are skipped
// and counted; unreadable files are fatal.
YelpLoadResult load_yelp(const std::string& review_path, const std::string& user_path);

// Generic TSV ingestion: user<TAB>item<TAB>timestamp[<TAB>rating].
std::vector<RawRecord> load_interactions_tsv(const std::string& path, uint64_t* skipped = nullptr);
// user<TAB>user edge list.
std::vector<std::pair<std::string, std::string>> load_edges_tsv(const std::string& path,
                                                                uint64_t* skipped = nullptr);
// Header-typed attribute TSV: first column "user", then "n:name" / "d:name"
// columns. Empty cells are missing values.
RawAttributes load_attributes_tsv(const std::string& path, uint64_t* skipped = nullptr);

// Iteratively removes users and items with fewer than k records until both
// minimum degrees reach k. Deterministic; errors if nothing survives.
std::vector<RawRecord> kcore_filter(std::vector<RawRecord> records, int k);

// Seeded user-level partition; returns ids of the held-out evaluation users.
std::unordered_set<std::string> partition_eval_users(const std::vector<RawRecord>& records,
                                                     double eval_fraction, uint64_t seed);

// Marks floor(fraction * n_edges) edges, in graph.edges() order, as held out
// from pre-training for relation-detection evaluation.
std::vector<uint8_t> partition_eval_edges(const SocialGraph& graph, double fraction,
                                          uint64_t seed);

// Groups records by user, sorts by timestamp (stable on ties), assigns
// vocabularies in first-occurrence order. Item vocabulary is built from
// non-eval users only; unseen items are dropped from eval users' sequences.
InteractionDataset build_dataset(const std::vector<RawRecord>& records,
                                 std::optional<int64_t> cutoff = std::nullopt,
                                 const std::unordered_set<std::string>& eval_users = {});

SocialGraph build_graph(const std::vector<std::pair<std::string, std::string>>& edges,
                        const InteractionDataset& ds);

void build_attributes(const RawAttributes& raw, const InteractionDataset& ds,
                      AttributeSchema& schema_out, AttributeTable& table_out);

LeaveOneOutSplit split_leave_one_out(const InteractionDataset& ds);

// n distinct items drawn without replacement with probability proportional to
// popularity, excluding the target and the user's history.
std::vector<int32_t> sample_eval_negatives(int32_t target, const std::vector<uint64_t>& popularity,
                                           int n, const std::unordered_set<int32_t>& user_history,
                                           Rng& rng);

}  // namespace uprec
