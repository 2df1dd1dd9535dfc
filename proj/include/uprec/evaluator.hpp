#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uprec/data.hpp"
#include "uprec/model.hpp"

namespace uprec {

struct MetricsReport {
  double hr1 = 0, hr5 = 0, hr10 = 0;
  double ndcg5 = 0, ndcg10 = 0;
  double mrr = 0;
  uint64_t n_trials = 0;
};

// Pessimistic 1-based rank: a tie with a negative counts as ranked below it.
int rank_of_target(double target_score, const std::vector<double>& negative_scores);

MetricsReport rank_metrics(const std::vector<int>& ranks);

// Leave-one-out next-item evaluation: the target plus popularity-sampled
// negatives are scored at the MASK position; items outside the candidate set
// never influence the rank. use_test=false evaluates the validation target on
// the training prefix, use_test=true the test target on the valid-inclusive
// prefix.
MetricsReport eval_seqrec(ModelParams& params, const DatasetBundle& bundle, bool use_test,
                          int n_neg, uint64_t seed);

// Max-pooled user representations from full, unmasked sequences for every
// user; row u is user u.
Mat all_user_reprs(ModelParams& params, const DatasetBundle& bundle);

// Held-out friend detection: for each eval edge, the true friend must have
// strictly the highest similarity among 99 uniform non-friend impostors.
double eval_srd(ModelParams& params, const DatasetBundle& bundle, int n_neg, uint64_t seed);

// Chooses the candidate sharing the most items with the query; ties go to the
// lowest candidate index.
int sim_baseline_choice(const std::vector<int32_t>& query_seq,
                        const std::vector<std::vector<int32_t>>& candidate_seqs);

// Same trials as eval_srd (same seed, same negatives) scored by item overlap.
double eval_srd_sim_baseline(const DatasetBundle& bundle, int n_neg, uint64_t seed);

struct ProfileReport {
  bool is_numeric = false;
  double mse_z = 0;    // standardized units
  double mse_raw = 0;  // original units
  double accuracy = 0; // discrete tasks
  uint64_t n_users = 0;
};

// Evaluates one attribute head over the held-out eval users, reading the
// CLS representation of each user's full sequence.
ProfileReport eval_profile(ModelParams& params, const DatasetBundle& bundle,
                           const std::string& task);

}  // namespace uprec
