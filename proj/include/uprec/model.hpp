#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uprec/data.hpp"
#include "uprec/encoder.hpp"
#include "uprec/objectives.hpp"

namespace uprec {

// Full trainable model: encoder plus the three task heads, together with the
// frozen preprocessing state (attribute schema, standardization constants)
// that predictions depend on.
struct ModelParams {
  EncoderConfig enc_cfg;
  EncoderParams encoder;
  MipHead mip;
  UapHead uap;
  SrdHead srd;
  Standardizer stand;
  AttributeSchema schema;

  static ModelParams init(const EncoderConfig& cfg, const AttributeSchema& schema, Rng& rng);
};

struct ModelGrads {
  EncoderGrads encoder;
  MipGrads mip;
  UapGrads uap;
  SrdGrads srd;

  static ModelGrads zeros(const ModelParams& params);
  void clear();
};

// A named view of one parameter tensor's storage. The traversal order is
// fixed and identical for ModelParams and ModelGrads, which is what lets the
// optimizer and checkpoint code pair parameters with their gradients and
// moments purely by position.
struct TensorRef {
  std::string name;
  double* data;
  size_t size;
};

std::vector<TensorRef> tensor_refs(ModelParams& m);
std::vector<TensorRef> tensor_refs(ModelGrads& g);

size_t total_param_count(ModelParams& m);

}  // namespace uprec
