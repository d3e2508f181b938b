#pragma once

#include <cstdint>
#include <vector>

#include "tvtbip/corpus.hpp"
#include "tvtbip/model.hpp"

namespace tvtbip {

// Entries of both factors never drop below this floor.
inline constexpr double kNmfFloor = 1e-10;

struct NmfResult {
  Matrix W;  // docs x K
  Matrix H;  // K x V
  std::vector<double> objective_trace;  // loss after each iteration
};

struct NmfTransformResult {
  Matrix W;
  std::vector<double> objective_trace;
};

// Squared Frobenius norm of C - W H, computed from the expansion
// |C|^2 - 2 <W, C H^T> + <W^T W, H H^T> so C is never densified.
double frobenius_loss(const CountMatrix& C, const Matrix& W, const Matrix& H);

// Lee-Seung multiplicative updates for min |C - W H|_F^2. Factors start
// uniform on (0, 1) scaled by mean(C) / K. Throws DegenerateInput when C has
// no positive entry and DimensionMismatch on an empty shape.
NmfResult nmf_factorize(const CountMatrix& C, int K, int iters, std::uint64_t seed);

// Same updates with H held fixed; only W moves.
NmfTransformResult nmf_transform(const CountMatrix& C, const Matrix& H_fixed,
                                 int iters, std::uint64_t seed);

}  // namespace tvtbip
