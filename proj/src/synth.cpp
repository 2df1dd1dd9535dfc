#include "uprec/synth.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "uprec/dataio.hpp"
#include "uprec/rng.hpp"

namespace uprec {

void SynthConfig::validate() const {
  if (n_users < 2 || n_items < 2) throw DataError("synth: need at least 2 users and 2 items");
  if (n_clusters < 2) throw DataError("synth: need at least 2 clusters");
  if (n_items % n_clusters != 0) throw DataError("synth: n_items must divide evenly into clusters");
  if (n_users < 2 * n_clusters) throw DataError("synth: need at least 2 users per cluster");
  if (seq_len_min < 1 || seq_len_max < seq_len_min)
    throw DataError("synth: invalid sequence length range");
  if (seq_len_max > n_items) throw DataError("synth: sequence length exceeds available items");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(intra_cluster_item_prob) || !prob(friend_intra_prob) ||
      !prob(eval_user_fraction) || !prob(eval_edge_fraction))
    throw DataError("synth: probabilities must lie in [0,1]");
  if (attribute_noise < 0) throw DataError("synth: negative attribute noise");
  if (avg_degree < 0) throw DataError("synth: negative average degree");
  if (homophily_pool < 1) throw DataError("synth: homophily_pool must be at least 1");
}

namespace {

// Markov walk over the cluster's item block: mostly the next or next-next
// item of a seeded ring permutation, occasionally a uniform jump, so the
// encoder sees genuine sequential structure rather than i.i.d. draws.
struct ClusterRing {
  std::vector<int> perm;  // position -> item offset within block

  static ClusterRing build(int block_size, Rng& rng) {
    ClusterRing r;
    r.perm.resize(block_size);
    for (int i = 0; i < block_size; ++i) r.perm[i] = i;
    for (size_t i = r.perm.size(); i > 1; --i)
      std::swap(r.perm[i - 1], r.perm[uniform_index(rng, i)]);
    return r;
  }
};

}  // namespace

SynthData generate_synth(const SynthConfig& cfg) {
  cfg.validate();
  const int K = cfg.n_clusters;
  const int blk = cfg.n_items / K;
  const int V = cfg.n_items;

  std::vector<ClusterRing> rings;
  for (int b = 0; b < K; ++b) {
    Rng rng = derive_rng(cfg.seed, 0xb10c0000ULL + b);
    rings.push_back(ClusterRing::build(blk, rng));
  }

  // Per-user sequences as synthetic item ids.
  std::vector<std::vector<int>> seqs(cfg.n_users);
  for (int u = 0; u < cfg.n_users; ++u) {
    int c = u % K;
    Rng rng = derive_rng(cfg.seed, 0x5e900000ULL + u);
    int len = cfg.seq_len_min +
              static_cast<int>(uniform_index(rng, cfg.seq_len_max - cfg.seq_len_min + 1));
    const ClusterRing& ring = rings[c];
    size_t pos = uniform_index(rng, ring.perm.size());
    auto& s = seqs[u];
    s.reserve(len);
    for (int t = 0; t < len; ++t) {
      if (uniform01(rng) < cfg.intra_cluster_item_prob) {
        double step = uniform01(rng);
        if (step < 0.7)
          pos = (pos + 1) % ring.perm.size();
        else if (step < 0.9)
          pos = (pos + 2) % ring.perm.size();
        else
          pos = uniform_index(rng, ring.perm.size());
        s.push_back(c * blk + ring.perm[pos]);
      } else {
        // Noise: uniform over items outside the user's block.
        int idx = static_cast<int>(uniform_index(rng, static_cast<size_t>(V - blk)));
        s.push_back(idx < c * blk ? idx : idx + blk);
      }
    }
  }

  std::vector<RawRecord> records;
  for (int u = 0; u < cfg.n_users; ++u)
    for (size_t t = 0; t < seqs[u].size(); ++t)
      records.push_back({"u" + std::to_string(u), "i" + std::to_string(seqs[u][t]),
                         static_cast<int64_t>(t), std::nullopt});

  // Friendships: mostly intra-cluster, and within the cluster biased toward
  // the highest item overlap among a sampled candidate pool, so the true
  // friend is distinguishable from arbitrary same-cluster users.
  std::vector<std::unordered_set<int>> item_sets(cfg.n_users);
  for (int u = 0; u < cfg.n_users; ++u)
    item_sets[u] = std::unordered_set<int>(seqs[u].begin(), seqs[u].end());
  auto overlap = [&](int a, int b) {
    const auto& small = item_sets[a].size() <= item_sets[b].size() ? item_sets[a] : item_sets[b];
    const auto& large = item_sets[a].size() <= item_sets[b].size() ? item_sets[b] : item_sets[a];
    size_t n = 0;
    for (int it : small) n += large.count(it);
    return n;
  };

  size_t target_edges =
      static_cast<size_t>(cfg.avg_degree * static_cast<double>(cfg.n_users) / 2.0);
  std::set<std::pair<int, int>> edge_set;
  Rng grng = derive_rng(cfg.seed, 0xf12e);
  size_t attempts = 0, max_attempts = 50 * (target_edges + 1);
  while (edge_set.size() < target_edges && attempts < max_attempts) {
    ++attempts;
    int u = static_cast<int>(uniform_index(grng, static_cast<size_t>(cfg.n_users)));
    int v = -1;
    if (uniform01(grng) < cfg.friend_intra_prob) {
      int c = u % K;
      size_t cluster_size = (cfg.n_users - 1 - c) / K + 1;  // users with id % K == c
      size_t best_ov = 0;
      for (int trial = 0; trial < cfg.homophily_pool; ++trial) {
        int cand = c + K * static_cast<int>(uniform_index(grng, cluster_size));
        if (cand == u) continue;
        size_t ov = overlap(u, cand);
        if (v < 0 || ov > best_ov) {
          v = cand;
          best_ov = ov;
        }
      }
      if (v < 0) continue;
    } else {
      do {
        v = static_cast<int>(uniform_index(grng, static_cast<size_t>(cfg.n_users)));
      } while (v % K == u % K);
    }
    if (u == v) continue;
    edge_set.insert({std::min(u, v), std::max(u, v)});
  }

  RawAttributes raw;
  raw.numeric_names = {"score"};
  raw.discrete_names = {"group"};
  for (int u = 0; u < cfg.n_users; ++u) {
    int c = u % K;
    Rng rng = derive_rng(cfg.seed, 0xa7720000ULL + u);
    int label = c;
    if (uniform01(rng) < cfg.attribute_noise) {
      int other = static_cast<int>(uniform_index(rng, static_cast<size_t>(K - 1)));
      label = other >= c ? other + 1 : other;
    }
    double score = 1.0 + 4.0 * static_cast<double>(c) / static_cast<double>(K - 1) +
                   cfg.attribute_noise * normal01(rng);
    std::string uid = "u" + std::to_string(u);
    raw.discrete[uid]["group"] = "g" + std::to_string(label);
    raw.numeric[uid]["score"] = score;
  }

  records = kcore_filter(std::move(records), 5);
  auto eval_users = partition_eval_users(records, cfg.eval_user_fraction, cfg.seed);

  SynthData out;
  out.bundle.ds = build_dataset(records, std::nullopt, eval_users);
  std::vector<std::pair<std::string, std::string>> edges;
  for (auto [a, b] : edge_set)
    edges.push_back({"u" + std::to_string(a), "u" + std::to_string(b)});
  out.bundle.graph = build_graph(edges, out.bundle.ds);
  build_attributes(raw, out.bundle.ds, out.bundle.schema, out.bundle.attrs);
  out.bundle.split = split_leave_one_out(out.bundle.ds);
  out.bundle.is_eval_edge =
      partition_eval_edges(out.bundle.graph, cfg.eval_edge_fraction, cfg.seed);

  out.cluster_of.resize(out.bundle.ds.n_users());
  for (int32_t i = 0; i < out.bundle.ds.n_users(); ++i) {
    const std::string& id = out.bundle.ds.users.id_of(i);
    out.cluster_of[i] = std::stoi(id.substr(1)) % K;
  }
  return out;
}

}  // namespace uprec
