#pragma once

#include <cmath>
#include <vector>

#include "doem/doem_engine.hpp"

namespace testing {

using doem::DoemConfig;
using doem::Index;
using doem::RealVector;

// Classical Boltzmann machine on spins, enumerated. phi(s) follows the
// parameter layout: b_i -> -s_i, w_ij -> -s_i s_j, gamma -> 0.
struct ClassicalBm {
  int m, n;
  std::vector<RealVector> phi;  // one per joint basis index

  ClassicalBm(int m_, int n_) : m(m_), n(n_) {
    const int t = m + n;
    const Index p = 2 * t + t * (t - 1) / 2;
    for (Index k = 0; k < (Index{1} << t); ++k) {
      std::vector<double> s(static_cast<std::size_t>(t));
      for (int q = 0; q < t; ++q) s[static_cast<std::size_t>(q)] = ((k >> (t - 1 - q)) & 1) ? -1.0 : 1.0;
      RealVector f = RealVector::Zero(p);
      Index r = 0;
      for (int i = 0; i < t; ++i) f(r++) = -s[static_cast<std::size_t>(i)];
      for (int i = 1; i < t; ++i)
        for (int j = 0; j < i; ++j) f(r++) = -s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(j)];
      phi.push_back(f);
    }
  }

  RealVector log_joint(const RealVector& th) const {
    RealVector e(static_cast<Index>(phi.size()));
    for (std::size_t k = 0; k < phi.size(); ++k) e(static_cast<Index>(k)) = th.dot(phi[k]);
    const double top = e.maxCoeff();
    const double lz = top + std::log((e.array() - top).exp().sum());
    return e.array() - lz;
  }

  double log_z(const RealVector& th) const {
    RealVector e(static_cast<Index>(phi.size()));
    for (std::size_t k = 0; k < phi.size(); ++k) e(static_cast<Index>(k)) = th.dot(phi[k]);
    const double top = e.maxCoeff();
    return top + std::log((e.array() - top).exp().sum());
  }

  RealVector model_moments(const RealVector& th) const {
    const RealVector lp = log_joint(th);
    RealVector out = RealVector::Zero(th.size());
    for (std::size_t k = 0; k < phi.size(); ++k) out += std::exp(lp(static_cast<Index>(k))) * phi[k];
    return out;
  }

  // E-step posterior q(h | v) at th, weighted by the data p(v).
  RealVector joint_weights(const RealVector& pv, const RealVector& th) const {
    const RealVector lp = log_joint(th);
    const Index hn = Index{1} << n;
    RealVector out = RealVector::Zero(lp.size());
    for (Index v = 0; v < pv.size(); ++v) {
      if (pv(v) == 0.0) continue;
      double mv = 0.0;
      for (Index h = 0; h < hn; ++h) mv += std::exp(lp(v * hn + h));
      for (Index h = 0; h < hn; ++h) out(v * hn + h) = pv(v) * std::exp(lp(v * hn + h)) / mv;
    }
    return out;
  }

  RealVector moments_of(const RealVector& weights) const {
    RealVector out = RealVector::Zero(phi.front().size());
    for (std::size_t k = 0; k < phi.size(); ++k) out += weights(static_cast<Index>(k)) * phi[k];
    return out;
  }

  double loglik(const RealVector& pv, const RealVector& th) const {
    const RealVector lp = log_joint(th);
    const Index hn = Index{1} << n;
    double l = 0.0;
    for (Index v = 0; v < pv.size(); ++v) {
      if (pv(v) == 0.0) continue;
      double mv = 0.0;
      for (Index h = 0; h < hn; ++h) mv += std::exp(lp(v * hn + h));
      l += pv(v) * std::log(mv);
    }
    return l;
  }

  // Same generalized M-step as the trainer: fixed inner budget, halving
  // backtracking on Q with a 1e-12 slack.
  RealVector em_step(const RealVector& pv, const RealVector& th, const DoemConfig& cfg) const {
    const RealVector d = moments_of(joint_weights(pv, th));
    RealVector x = th;
    double q = x.dot(d) - log_z(x);
    RealVector g = d - model_moments(x);
    for (int it = 0; it < cfg.m_step_inner_iters; ++it) {
      if (g.cwiseAbs().maxCoeff() == 0.0) break;
      double step = cfg.learning_rate;
      bool ok = false;
      for (int h = 0; h <= 20; ++h) {
        const RealVector y = x + step * g;
        const double qy = y.dot(d) - log_z(y);
        if (qy >= q - 1e-12) {
          x = y;
          q = qy;
          g = d - model_moments(x);
          ok = true;
          break;
        }
        step *= 0.5;
      }
      if (!ok) break;
    }
    return x;
  }
};

}  // namespace testing
