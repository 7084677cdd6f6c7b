#include "snncodec/kernels.hpp"

namespace snncodec::kernels {
namespace {

void gemm_scalar(ConstMatrix a, ConstMatrix b, Matrix c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* crow = c.data + i * c.stride;
    const double* arow = a.data + i * a.stride;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double s = arow[p];
      if (s == 0.0) continue;
      const double* brow = b.data + p * b.stride;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += s * brow[j];
    }
  }
}

double dot_scalar(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", &gemm_scalar, &dot_scalar, &axpy_scalar};
  return table;
}

}  // namespace snncodec::kernels
