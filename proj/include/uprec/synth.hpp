#pragma once

#include <cstdint>
#include <vector>

#include "uprec/data.hpp"

namespace uprec {

// Planted-structure generator: users belong to latent clusters that drive
// their item choices (first-order Markov walk over the cluster's item block),
// their friendships (mostly intra-cluster, by item overlap), and their
// attributes (noisy functions of the cluster id). A model that exploits
// attributes and relations can therefore be validated against the latent
// structure.
struct SynthConfig {
  int n_users = 2000;
  int n_items = 500;
  int n_clusters = 10;
  int seq_len_min = 6;
  int seq_len_max = 14;
  double intra_cluster_item_prob = 0.8;
  double friend_intra_prob = 0.9;
  double attribute_noise = 0.1;
  double avg_degree = 6.0;
  int homophily_pool = 16;
  double eval_user_fraction = 0.1;
  double eval_edge_fraction = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  DatasetBundle bundle;
  // Ground-truth cluster per dataset user index.
  std::vector<int32_t> cluster_of;
};

SynthData generate_synth(const SynthConfig& cfg);

}  // namespace uprec
