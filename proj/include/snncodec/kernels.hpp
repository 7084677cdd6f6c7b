#pragma once

// Dense double-precision inner loops used by the tensor engine.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The variant is chosen once at startup from CPUID; setting
// SNNCODEC_KERNELS=scalar in the environment forces the reference path.
// The two paths agree to rounding (FMA contracts differently) and are
// equivalence-tested against each other.

#include <cstddef>
#include <span>
#include <string_view>

namespace snncodec::kernels {

/// Row-major read-only matrix view with an explicit row stride.
struct ConstMatrix {
  const double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t stride;
};

/// Row-major mutable matrix view.
struct Matrix {
  double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t stride;
};

struct KernelTable {
  std::string_view name;
  /// c += a * b
  void (*gemm)(ConstMatrix a, ConstMatrix b, Matrix c);
  double (*dot)(std::span<const double> x, std::span<const double> y);
  /// y += alpha * x
  void (*axpy)(double alpha, std::span<const double> x, std::span<double> y);
};

const KernelTable& scalar_table();

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

/// Table selected for this process.
const KernelTable& active();

/// Selects a table by name ("scalar" or "avx2"). Returns false if unavailable.
bool select(std::string_view name);

}  // namespace snncodec::kernels
