#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "doem/doem_engine.hpp"
#include "doem/errors.hpp"
#include "doem/quantum_info.hpp"
#include "classical_bm.hpp"
#include "support.hpp"

using namespace doem;
using testing::ClassicalBm;
using testing::max_abs_diff;

namespace {

VisibleDistribution four_point() {
  // Rows 00, 01, 11, 11 of a 2-bit dataset.
  RealVector p(4);
  p << 0.25, 0.25, 0.0, 0.5;
  return VisibleDistribution::from_dense(2, p);
}

double dense_log_z(const ComplexMatrix& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  const double top = es.eigenvalues().maxCoeff();
  return top + std::log((es.eigenvalues().array() - top).exp().sum());
}

}  // namespace

TEST_SUITE("doem-engine") {
  TEST_CASE("qelbo saturates at the model's own state") {
    const QbmSpec s = QbmSpec::random(2, 2, 51, 1.0, 0.7);
    const ParamHamiltonian h = build_qbm_hamiltonian(s);
    const DensityOperator rho = gibbs_state(h, {4, 4});
    const DensityOperator rv = partial_trace(rho, 1);
    CHECK(qelbo(rho, h.theta, h, rv) == doctest::Approx(log_likelihood(rv, rv)).epsilon(1e-10));
  }

  TEST_CASE("qelbo on diagonal states equals the classical ELBO") {
    const ClassicalBm bm(2, 1);
    QbmSpec s = QbmSpec::random(2, 1, 52, 1.0, 0.0);
    QbmSpec other = QbmSpec::random(2, 1, 53, 1.0, 0.0);
    const ParamHamiltonian h = build_qbm_hamiltonian(s);
    RealVector pv(4);
    pv << 0.1, 0.4, 0.3, 0.2;
    const RealVector w = bm.joint_weights(pv, other.theta());
    const DensityOperator eta({4, 2}, ComplexMatrix(w.cast<Complex>().asDiagonal()));
    const DensityOperator eta_v({4}, ComplexMatrix(pv.cast<Complex>().asDiagonal()));

    const RealVector lp = bm.log_joint(s.theta());
    double elbo = 0.0;
    for (Index k = 0; k < w.size(); ++k) {
      const double q = w(k) / pv(k / 2);
      elbo += w(k) * (lp(k) - std::log(q));
    }
    CHECK(qelbo(eta, h.theta, h, eta_v) == doctest::Approx(elbo).epsilon(1e-12));
    CHECK(elbo <= bm.loglik(pv, s.theta()) + 1e-12);
  }

  TEST_CASE("qelbo lower-bounds the log-likelihood for feasible extensions") {
    std::mt19937_64 gen(54);
    const QbmSpec s = QbmSpec::random(1, 2, 55, 1.0, 1.0);
    const ParamHamiltonian h = build_qbm_hamiltonian(s);
    const DensityOperator rv = model_marginal(gibbs_state(h, {2, 4}), 1);
    const DensityOperator eta_v({2}, testing::random_density(2, gen));
    const ComplexMatrix ev_sqrt = matrix_sqrt(eta_v.op()).matrix();
    for (int t = 0; t < 20; ++t) {
      const ComplexMatrix sigma = testing::random_density(8, gen);
      const ComplexMatrix a = ev_sqrt * matrix_inv_sqrt(hermitize(partial_trace_last(sigma, 4))).matrix();
      const ComplexMatrix lifted = kron(a, identity_matrix(4));
      const DensityOperator eta({2, 4}, hermitize(lifted * sigma * lifted.adjoint()));
      CHECK(qelbo(eta, h.theta, h, eta_v) <= log_likelihood(eta_v, rv) + 1e-9);
    }
    const DensityOperator wrong({2, 4}, testing::random_density(8, gen));
    CHECK_THROWS_AS(qelbo(wrong, h.theta, h, eta_v), ValidationError);
  }

  TEST_CASE("block e_step matches dense Petz recovery") {
    const QbmSpec s = QbmSpec::random(2, 2, 56, 1.0, 0.8);
    const CqlvmModel model = cqlvm_blocks(s);
    const VisibleDistribution target = four_point();
    const BlockState eta = e_step(target, model, s.theta());
    const DensityOperator rho = gibbs_state(build_qbm_hamiltonian(s), {4, 4});
    const DensityOperator dense = e_step(target.density(), rho);
    CHECK(max_abs_diff(eta.dense(), dense.matrix()) < 1e-10);
    for (std::size_t i = 0; i < eta.index.size(); ++i)
      CHECK(eta.blocks[i].trace().real() == doctest::Approx(target.prob[i]).epsilon(1e-12));
    CHECK(max_abs_diff(partial_trace(dense, 1).matrix(), target.density().matrix()) < 1e-9);

    const DensityOperator self = e_step(partial_trace(rho, 1), rho);
    CHECK(max_abs_diff(self.matrix(), rho.matrix()) < 1e-10);

    RealVector one = RealVector::Zero(4);
    one(2) = 1.0;
    const BlockState single = e_step(VisibleDistribution::from_dense(2, one), model, s.theta());
    REQUIRE(single.index.size() == 1);
    CHECK(single.index[0] == 2);
    const ComplexMatrix d = single.dense();
    CHECK(d.block(8, 8, 4, 4).trace().real() == doctest::Approx(1.0));
    CHECK((d.cwiseAbs().sum() - d.block(8, 8, 4, 4).cwiseAbs().sum()) == 0.0);
  }

  TEST_CASE("dense e_step refuses a target without Condition S") {
    const QbmSpec s = QbmSpec::random(1, 1, 57, 1.0, 0.8);
    const DensityOperator rho = gibbs_state(build_qbm_hamiltonian(s), {2, 2});
    ComplexMatrix w = 0.5 * identity_matrix(2);
    w(0, 1) = w(1, 0) = 0.3;
    CHECK_THROWS_AS(e_step(DensityOperator({2}, w), rho), ConditionSViolation);
  }

  TEST_CASE("minorant property at the E-step output") {
    const QbmSpec s = QbmSpec::random(2, 2, 58, 1.0, 0.8);
    CqlvmModel model = cqlvm_blocks(s);
    const VisibleDistribution target = four_point();
    const BlockState eta = e_step(target, model, s.theta());
    auto ll = [&](const RealVector& th) {
      const BlockGibbs g = block_gibbs(model, th);
      double l = 0.0;
      for (std::size_t i = 0; i < target.size(); ++i) l += target.prob[i] * g.log_prob(target.index[i]);
      return l;
    };
    CHECK(std::abs(qelbo(eta, s.theta(), model, target) - ll(s.theta())) < 1e-8);
    std::mt19937_64 gen(59);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    QbmSpec probe = s;
    for (int t = 0; t < 100; ++t) {
      for (Index i = 0; i < probe.b.size(); ++i) probe.b(i) = u(gen);
      for (int i = 1; i < probe.total(); ++i)
        for (int j = 0; j < i; ++j) probe.w(i, j) = probe.w(j, i) = u(gen);
      for (int i = probe.m; i < probe.total(); ++i) probe.gamma(i) = u(gen);
      CHECK(qelbo(eta, probe.theta(), model, target) <= ll(probe.theta()) + 1e-9);
    }
  }

  TEST_CASE("m_step_gradient vanishes at the model state") {
    const QbmSpec s = QbmSpec::random(2, 1, 60, 1.0, 0.5);
    const ParamHamiltonian h = build_qbm_hamiltonian(s);
    const RealVector g = m_step_gradient(gibbs_state(h, {4, 2}), h);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("m_step_gradient agrees with central differences") {
    std::mt19937_64 gen(61);
    for (int t = 0; t < 10; ++t) {
      QbmSpec s = QbmSpec::random(2, 1, 62 + static_cast<std::uint64_t>(t), 1.0, 0.8);
      s.gamma(0) = 0.3;  // gradient holds for any Hermitian family, visible field included
      const ParamHamiltonian h = build_qbm_hamiltonian(s);
      const DensityOperator eta({4, 2}, testing::random_density(8, gen));
      const RealVector g = m_step_gradient(eta, h);
      auto q = [&](const RealVector& th) {
        const ComplexMatrix hm = h.assemble(th).matrix();
        return (eta.matrix() * hm).trace().real() - dense_log_z(hm);
      };
      for (Index r = 0; r < g.size(); ++r) {
        RealVector p = h.theta, m = h.theta;
        p(r) += 1e-5;
        m(r) -= 1e-5;
        const double fd = (q(p) - q(m)) / 2e-5;
        CHECK(std::abs(g(r) - fd) / (1.0 + std::abs(g(r))) < 1e-5);
      }
    }
  }

  TEST_CASE("m_step_gradient on a classical model matches enumeration") {
    const ClassicalBm bm(2, 2);
    const QbmSpec s = QbmSpec::random(2, 2, 63, 1.0, 0.0);
    const CqlvmModel model = cqlvm_blocks(s);
    RealVector pv(4);
    pv << 0.4, 0.1, 0.2, 0.3;
    const BlockState eta = e_step(VisibleDistribution::from_dense(2, pv), model, s.theta());
    const RealVector g = m_step_gradient(eta, model);
    const RealVector oracle = bm.moments_of(bm.joint_weights(pv, s.theta())) - bm.model_moments(s.theta());
    const Index nc = oracle.size() - 4;  // gamma entries have no classical counterpart
    CHECK((g.head(nc) - oracle.head(nc)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.tail(4).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("m_step examples") {
    const QbmSpec s = QbmSpec::random(2, 1, 64, 1.0, 0.5);
    const ParamHamiltonian h = build_qbm_hamiltonian(s);
    DoemConfig cfg;
    const MStepResult still = m_step(gibbs_state(h, {4, 2}), h, cfg);
    CHECK((still.theta - h.theta).cwiseAbs().maxCoeff() < 1e-12);

    ParamHamiltonian one;
    one.dim = 2;
    RealVector d(2);
    d << 1.0, 0.0;
    one.terms.push_back(HermitianOperator::diagonal(d));
    one.theta = RealVector::Zero(1);
    RealVector e(2);
    e << 0.8, 0.2;
    DoemConfig long_run;
    long_run.m_step_inner_iters = 500;
    long_run.learning_rate = 2.0;
    const MStepResult r = m_step(DensityOperator({2}, HermitianOperator::diagonal(e)), one, long_run);
    CHECK(r.theta(0) == doctest::Approx(std::log(0.8 / 0.2)).epsilon(1e-8));

    std::mt19937_64 gen(65);
    const DensityOperator eta({4, 2}, testing::random_density(8, gen));
    const MStepResult up = m_step(eta, h, cfg);
    CHECK(up.q_values.size() == static_cast<std::size_t>(up.inner_iters) + 1);
    for (std::size_t i = 1; i < up.q_values.size(); ++i) CHECK(up.q_values[i] >= up.q_values[i - 1] - 1e-12);
    CHECK(up.q_values.back() > up.q_values.front());
  }

  TEST_CASE("classical limit tracks a classical EM implementation") {
    const ClassicalBm bm(2, 2);
    const QbmSpec init = QbmSpec::random(2, 2, 66, 0.5, 0.0);
    const VisibleDistribution target = four_point();
    DoemConfig cfg;
    cfg.max_outer_iters = 15;
    cfg.grad_tol = 1e-300;
    const DoemResult res = run_doem(target, init, cfg);
    const RealVector pv = target.dense();
    RealVector th = init.theta();
    for (std::size_t t = 0; t < res.thetas.size(); ++t) {
      CHECK((res.thetas[t] - th).cwiseAbs().maxCoeff() < 1e-8);
      if (t < res.trace.records.size())
        CHECK(res.trace.records[t].log_likelihood == doctest::Approx(bm.loglik(pv, th)).epsilon(1e-10));
      th = bm.em_step(pv, th, cfg);
    }
  }

  TEST_CASE("block and dense trajectories coincide") {
    const QbmSpec init = QbmSpec::random(2, 2, 67, 0.5, 0.8);
    const VisibleDistribution target = four_point();
    DoemConfig cfg;
    cfg.max_outer_iters = 8;
    cfg.grad_tol = 1e-300;
    const DoemResult block = run_doem(target, init, cfg);
    const DoemResult dense = run_doem_dense(target.density(), init, cfg);
    REQUIRE(block.thetas.size() == dense.thetas.size());
    for (std::size_t t = 0; t < block.thetas.size(); ++t)
      CHECK((block.thetas[t] - dense.thetas[t]).cwiseAbs().maxCoeff() < 1e-8);
    for (std::size_t t = 0; t < block.trace.records.size(); ++t)
      CHECK(block.trace.records[t].qelbo == doctest::Approx(dense.trace.records[t].qelbo).epsilon(1e-9));
  }

  TEST_CASE("relative entropy to a mixture target decreases") {
    RealVector p(8);
    p << 0.30, 0.02, 0.03, 0.10, 0.05, 0.12, 0.03, 0.35;
    const QbmSpec init = QbmSpec::random(3, 2, 68, 0.1, 0.5);
    DoemConfig cfg;
    cfg.max_outer_iters = 30;
    const DoemResult res = run_doem(VisibleDistribution::from_dense(3, p), init, cfg);
    REQUIRE(res.trace.records.size() == 30);
    for (std::size_t t = 1; t < res.trace.records.size(); ++t)
      CHECK(res.trace.records[t].relative_entropy < res.trace.records[t - 1].relative_entropy);
    CHECK(res.ascent_violations == 0);
    for (const auto& r : res.trace.records) CHECK(r.qelbo == doctest::Approx(r.log_likelihood).epsilon(1e-8));
  }

  TEST_CASE("a stationary start gives a flat trace") {
    const QbmSpec init = QbmSpec::random(2, 1, 69, 1.0, 0.6);
    const CqlvmModel model = cqlvm_blocks(init);
    const BlockGibbs g = block_gibbs(model, init.theta());
    RealVector p(4);
    for (Index k = 0; k < 4; ++k) p(k) = std::exp(g.log_prob(k));
    DoemConfig cfg;
    cfg.max_outer_iters = 5;
    cfg.grad_tol = 1e-300;
    const DoemResult res = run_doem(VisibleDistribution::from_dense(2, p), init, cfg);
    for (const auto& r : res.trace.records) {
      CHECK(r.log_likelihood == doctest::Approx(res.trace.records.front().log_likelihood).epsilon(1e-12));
      CHECK(r.gradient_norm < 1e-12);
    }

    DoemConfig stop;
    const DoemResult early = run_doem(VisibleDistribution::from_dense(2, p), init, stop);
    CHECK(early.stop == StopReason::Converged);
    CHECK(early.trace.records.size() == 1);
  }

  TEST_CASE("dense path aborts when Condition S is lost") {
    const QbmSpec init = QbmSpec::random(1, 1, 70, 1.0, 0.6);
    ComplexMatrix w = 0.5 * identity_matrix(2);
    w(0, 1) = w(1, 0) = 0.25;
    DoemConfig cfg;
    cfg.max_outer_iters = 3;
    try {
      run_doem_dense(DensityOperator({2}, w), init, cfg);
      FAIL("expected ConditionSViolation");
    } catch (const ConditionSViolation& e) {
      CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }

    QbmSpec visible_field = init;
    visible_field.gamma(0) = 0.5;
    RealVector p(2);
    p << 0.3, 0.7;
    CHECK_THROWS_AS(run_doem(VisibleDistribution::from_dense(1, p), visible_field, cfg), ValidationError);
  }

  TEST_CASE("trace csv and checkpoints") {
    const QbmSpec init = QbmSpec::random(2, 1, 71, 0.5, 0.4);
    const auto dir = std::filesystem::temp_directory_path() / "doem_engine_ckpt";
    std::filesystem::remove_all(dir);
    DoemConfig cfg;
    cfg.max_outer_iters = 4;
    cfg.checkpoint_every = 2;
    cfg.checkpoint_dir = dir;
    const DoemResult res = run_doem(four_point(), init, cfg);
    std::ostringstream a, b;
    res.trace.write_csv(a);
    run_doem(four_point(), init, cfg).trace.write_csv(b);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("iter,loglik,qelbo,rel_entropy,grad_norm,seconds\n", 0) == 0);
    CHECK(a.str().find(",\n") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "checkpoint_000002.json"));
    CHECK(std::filesystem::exists(dir / "checkpoint_000004.json"));
    std::filesystem::remove_all(dir);

    DoemConfig bad;
    bad.learning_rate = -1.0;
    CHECK_THROWS_AS(run_doem(four_point(), init, bad), ValidationError);
  }
}
