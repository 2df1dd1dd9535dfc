#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace uprec {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Reserved token ids; real items start at kNumSpecialTokens.
constexpr int32_t kPadId = 0;
constexpr int32_t kMaskId = 1;
constexpr int32_t kClsId = 2;
constexpr int32_t kSepId = 3;
constexpr int32_t kNumSpecialTokens = 4;

inline bool is_special_token(int32_t id) { return id >= 0 && id < kNumSpecialTokens; }

// Data-shape and ingestion failures; mapped to exit code 2 by the CLI.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss during optimization; mapped to exit code 3 by the CLI.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace uprec
