#include "tvtbip/nmf.hpp"

#include <limits>
#include <random>

#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace {

constexpr double kTiny = std::numeric_limits<double>::min();

// C H^T, docs x K.
Matrix times_transpose(const CountMatrix& C, const Matrix& H) {
  const Eigen::Index K = H.rows();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(C.rows()), K);
  for (std::size_t i = 0; i < C.rows(); ++i) {
    auto dst = out.row(static_cast<Eigen::Index>(i));
    for (const auto& e : C.row(i)) dst += e.count * H.col(e.col).transpose();
  }
  return out;
}

// W^T C, K x V.
Matrix transpose_times(const Matrix& W, const CountMatrix& C) {
  Matrix out = Matrix::Zero(W.cols(), static_cast<Eigen::Index>(C.cols()));
  for (std::size_t i = 0; i < C.rows(); ++i) {
    const auto w = W.row(static_cast<Eigen::Index>(i));
    for (const auto& e : C.row(i)) out.col(e.col) += e.count * w.transpose();
  }
  return out;
}

double squared_norm(const CountMatrix& C) {
  double s = 0.0;
  for (std::size_t i = 0; i < C.rows(); ++i) {
    for (const auto& e : C.row(i)) s += static_cast<double>(e.count) * e.count;
  }
  return s;
}

Matrix random_factor(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = std::max(unif(rng) * scale, kNmfFloor);
  }
  return m;
}

// W <- W * (C H^T) / (W H H^T), floored.
void update_w(Matrix& W, const Matrix& CHt, const Matrix& HHt) {
  const Matrix denom = W * HHt;
  W = (W.array() * CHt.array() / denom.array().max(kTiny)).max(kNmfFloor);
}

double loss_from_parts(double c_norm2, const Matrix& W, const Matrix& CHt, const Matrix& HHt) {
  const Matrix WtW = W.transpose() * W;
  return c_norm2 - 2.0 * (W.array() * CHt.array()).sum() + (WtW.array() * HHt.array()).sum();
}

}  // namespace

double frobenius_loss(const CountMatrix& C, const Matrix& W, const Matrix& H) {
  if (W.rows() != static_cast<Eigen::Index>(C.rows()) ||
      H.cols() != static_cast<Eigen::Index>(C.cols()) || W.cols() != H.rows()) {
    throw DimensionMismatch("frobenius_loss: factor shapes do not match C");
  }
  return loss_from_parts(squared_norm(C), W, times_transpose(C, H), H * H.transpose());
}

NmfResult nmf_factorize(const CountMatrix& C, int K, int iters, std::uint64_t seed) {
  if (K < 1 || iters < 1 || C.rows() == 0 || C.cols() == 0) {
    throw DimensionMismatch("nmf_factorize: need K >= 1, iters >= 1 and a non-empty matrix");
  }
  if (C.total() <= 0) throw DegenerateInput("nmf_factorize: count matrix is all zero");

  std::mt19937_64 rng(seed);
  const double scale = C.mean() / K;
  NmfResult res;
  res.W = random_factor(static_cast<Eigen::Index>(C.rows()), K, scale, rng);
  res.H = random_factor(K, static_cast<Eigen::Index>(C.cols()), scale, rng);
  res.objective_trace.reserve(static_cast<std::size_t>(iters));
  const double c_norm2 = squared_norm(C);

  for (int it = 0; it < iters; ++it) {
    const Matrix WtC = transpose_times(res.W, C);
    const Matrix WtW = res.W.transpose() * res.W;
    const Matrix denom = WtW * res.H;
    res.H = (res.H.array() * WtC.array() / denom.array().max(kTiny)).max(kNmfFloor);

    const Matrix CHt = times_transpose(C, res.H);
    const Matrix HHt = res.H * res.H.transpose();
    update_w(res.W, CHt, HHt);
    res.objective_trace.push_back(loss_from_parts(c_norm2, res.W, CHt, HHt));
  }
  return res;
}

NmfTransformResult nmf_transform(const CountMatrix& C, const Matrix& H_fixed, int iters,
                                 std::uint64_t seed) {
  if (H_fixed.cols() != static_cast<Eigen::Index>(C.cols()) || H_fixed.rows() < 1 || iters < 1) {
    throw DimensionMismatch("nmf_transform: H must be K x V with V matching C");
  }
  if ((H_fixed.array() < 0.0).any()) throw DimensionMismatch("nmf_transform: H must be non-negative");
  const Eigen::Index K = H_fixed.rows();
  std::mt19937_64 rng(seed);
  NmfTransformResult res;
  res.W = random_factor(static_cast<Eigen::Index>(C.rows()), K, C.mean() / static_cast<double>(K), rng);
  const Matrix CHt = times_transpose(C, H_fixed);
  const Matrix HHt = H_fixed * H_fixed.transpose();
  const double c_norm2 = squared_norm(C);
  res.objective_trace.reserve(static_cast<std::size_t>(iters));
  for (int it = 0; it < iters; ++it) {
    update_w(res.W, CHt, HHt);
    res.objective_trace.push_back(loss_from_parts(c_norm2, res.W, CHt, HHt));
  }
  return res;
}

}  // namespace tvtbip
