#pragma once

#include <vector>

#include "doem/operator_core.hpp"

namespace doem {

// Sparse diagonal distribution over 2^d_v visible basis states. Indices are
// strictly increasing and every stored probability is positive.
struct VisibleDistribution {
  int d_v = 0;
  std::vector<Index> index;
  std::vector<double> prob;

  static VisibleDistribution from_dense(int d_v, const RealVector& p);

  std::size_t size() const { return index.size(); }
  void validate() const;
  double entropy() const;
  // Probability vector of length 2^d_v.
  RealVector dense() const;
  // diag(dense()); refused above the qubit cap.
  DensityOperator density() const;
};

}  // namespace doem
