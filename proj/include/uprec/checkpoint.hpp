#pragma once

#include <optional>
#include <string>

#include "uprec/adam.hpp"
#include "uprec/model.hpp"

namespace uprec {

struct Checkpoint {
  ModelParams params;
  std::optional<AdamState> opt;
  int64_t epoch = 0;
  std::string rng_state;     // serialized generator state, empty if not training
  std::string metadata_json; // free-form run metadata (config, flags, losses)
};

// Tensors are stored by name so a reader can verify it is reconstructing the
// exact architecture it expects; any name or shape mismatch is a hard error.
void save_checkpoint(const std::string& path, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Content hash of a serialized checkpoint file, for determinism comparisons
// and report provenance.
std::string checkpoint_id(const std::string& path);

}  // namespace uprec
