#pragma once

#include <cstddef>

#include "cdistill/embedding.hpp"

namespace cdistill {

struct PcaOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-10;  // residual ||C v - lambda v|| relative to the top eigenvalue
  // Each sweep multiplies the block by C^(2^squarings) before re-orthonormalizing.
  std::size_t squarings = 3;
};

struct PcaResult {
  Matrix components;               // k x d, unit rows, descending variance
  std::vector<double> variances;   // eigenvalue per row; 0 for filled rows
  std::size_t rank = 0;            // rows that are genuine principal directions
};

// Top-k principal directions of the row-centered l x d matrix, found by block
// power iteration on the covariance. Each row's largest-magnitude
// coordinate is positive. When the centered rank is below k, the remaining
// rows are deterministic perturbations of the normalized row sum,
// orthogonalized against the rows before them.
PcaResult principal_components(const Matrix& x, std::size_t k, const PcaOptions& options = {});

inline Matrix pca_components(const Matrix& x, std::size_t k, const PcaOptions& options = {}) {
  return principal_components(x, k, options).components;
}

}  // namespace cdistill
