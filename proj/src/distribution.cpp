#include "doem/distribution.hpp"

#include <cmath>
#include <sstream>

#include "doem/errors.hpp"

namespace doem {

VisibleDistribution VisibleDistribution::from_dense(int d_v, const RealVector& p) {
  if (d_v < 1 || d_v > 40 || p.size() != (Index{1} << d_v))
    throw ValidationError("visible distribution: vector length must be 2^d_v");
  VisibleDistribution out;
  out.d_v = d_v;
  for (Index i = 0; i < p.size(); ++i) {
    if (p(i) < 0.0 || !std::isfinite(p(i))) throw ValidationError("visible distribution: negative or non-finite entry");
    if (p(i) > 0.0) {
      out.index.push_back(i);
      out.prob.push_back(p(i));
    }
  }
  out.validate();
  return out;
}

void VisibleDistribution::validate() const {
  if (d_v < 1 || d_v > 62) throw ValidationError("visible distribution: d_v out of range");
  if (index.size() != prob.size() || index.empty())
    throw ValidationError("visible distribution: index/probability size mismatch or empty support");
  double total = 0.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= (Index{1} << d_v)) throw ValidationError("visible distribution: index out of range");
    if (i > 0 && index[i] <= index[i - 1]) throw ValidationError("visible distribution: indices must increase");
    if (!(prob[i] > 0.0)) throw ValidationError("visible distribution: probabilities must be positive");
    total += prob[i];
  }
  if (std::abs(total - 1.0) > 1e-10) {
    std::ostringstream os;
    os.precision(17);
    os << "visible distribution: probabilities sum to " << total;
    throw ValidationError(os.str());
  }
}

double VisibleDistribution::entropy() const {
  double s = 0.0;
  for (double p : prob) s -= p * std::log(p);
  return s;
}

RealVector VisibleDistribution::dense() const {
  if (d_v > 30) throw ValidationError("visible distribution: too many visible bits for a dense vector");
  RealVector p = RealVector::Zero(Index{1} << d_v);
  for (std::size_t i = 0; i < index.size(); ++i) p(index[i]) = prob[i];
  return p;
}

DensityOperator VisibleDistribution::density() const {
  if (d_v > kExactQubitCap) {
    std::ostringstream os;
    os << "dense visible density refused: " << d_v << " bits exceeds the cap of " << kExactQubitCap;
    throw ValidationError(os.str());
  }
  return DensityOperator(std::vector<Index>{Index{1} << d_v}, HermitianOperator::diagonal(dense()));
}

}  // namespace doem
