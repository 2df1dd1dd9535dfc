#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "uprec/adam.hpp"
#include "uprec/checkpoint.hpp"
#include "uprec/data.hpp"
#include "uprec/model.hpp"
#include "uprec/objectives.hpp"

namespace uprec {

struct PretrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.3;
  double lambda3 = 0.5;
  double learning_rate = 1e-3;
  int batch_size = 768;
  int iterations_per_epoch = 1500;
  int num_epochs = 75;
  int checkpoint_every = 5;
  double mask_proportion = 0.2;
  uint64_t seed = 0;
  bool enable_uap = true;
  bool enable_srd = true;
  // Whether the SRD user-pair sequences go through the same random masking as
  // the prediction batch; unmasked inputs are the evaluation-time condition.
  bool srd_masked_inputs = true;
  double profile_range_fraction = 0.05;
  double clip_norm = 0.0;  // 0 disables clipping

  void validate() const;
};

struct FinetuneConfig {
  double learning_rate = 1e-4;
  int batch_size = 768;
  int iterations_per_epoch = 1500;
  int num_epochs = 40;
  uint64_t seed = 0;
  int eval_n_neg = 99;
  double clip_norm = 0.0;

  void validate() const;
};

// A batch of (query, candidate) friend pairs: row j of the candidate side is
// the positive for row j of the query side; neg_mask flags usable in-batch
// negatives.
struct SrdBatch {
  TokenBatch query_tokens;
  TokenBatch cand_tokens;
  std::vector<int32_t> query_users;
  std::vector<int32_t> cand_users;
  std::vector<std::vector<uint8_t>> neg_mask;
};

struct StepLosses {
  double mip = 0;
  double uap = 0;
  double srd = 0;
  double total = 0;
  uint64_t srd_skipped = 0;
};

// One optimization step's forward and backward over all enabled tasks.
// Gradients accumulate into grads (callers zero it first); task weights of 0
// skip that task entirely.
StepLosses joint_forward_backward(ModelParams& params, const MaskedBatch& mb, const SrdBatch* sb,
                                  const AttributeTable& attrs, double lambda1, double lambda2,
                                  double lambda3, bool train, Rng* rng, ModelGrads& grads);

// Samples batch_size users with replacement from pool and masks their
// training subsequences.
MaskedBatch draw_masked_batch(const InteractionDataset& ds, const std::vector<int32_t>& pool,
                              int batch_size, double mask_p, int max_len, Rng& rng);

SrdBatch draw_srd_batch(const DatasetBundle& bundle,
                        const std::vector<std::pair<int32_t, int32_t>>& edges,
                        const std::vector<double>& numeric_range, double range_fraction,
                        int batch_size, double mask_p, bool masked_inputs, int max_len, Rng& rng);

struct PretrainResult {
  std::vector<std::string> checkpoint_paths;
  std::string final_checkpoint;
  std::vector<double> epoch_mean_loss;
};

// Full pre-training loop. Deterministic given config and dataset; resuming
// from an epoch-boundary checkpoint continues the exact same trajectory.
PretrainResult pretrain(const DatasetBundle& bundle, const EncoderConfig& enc_cfg,
                        const PretrainConfig& cfg, const std::string& out_dir, std::ostream* log,
                        const std::string& resume_from = "");

struct FinetuneResult {
  Checkpoint best;
  int best_epoch = 0;  // 0 means the starting checkpoint was never beaten
  double best_hr1 = 0;
  std::vector<double> valid_hr1_by_epoch;
};

// Next-item fine-tuning with per-epoch validation; returns the parameters at
// the epoch with the highest validation HR@1 (ties to the earliest epoch,
// including the untrained starting point).
FinetuneResult finetune_seqrec(const Checkpoint& start, const DatasetBundle& bundle,
                               const FinetuneConfig& cfg, std::ostream* log);

// Attribute-prediction fine-tuning on the CLS representation with a freshly
// initialized head for the chosen attribute.
Checkpoint finetune_profile(const Checkpoint& start, const DatasetBundle& bundle,
                            const std::string& task, const FinetuneConfig& cfg, std::ostream* log);

}  // namespace uprec
