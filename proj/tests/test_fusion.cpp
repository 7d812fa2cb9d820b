#include <doctest.h>

#include <cmath>

#include "mrtherm/fusion.hpp"
#include "mrtherm/rng.hpp"
#include "test_support.hpp"

using namespace mrtherm;

namespace {

SamplingPattern pattern_1d(int phase_extent, std::vector<int> lines, int readout_extent = 0) {
  (void)readout_extent;
  SamplingPattern pat;
  pat.method = "maxvar";
  pat.geometry.readout_axis = 0;
  pat.geometry.phase_axes = {1};
  pat.geometry.extents = {phase_extent, 1};
  pat.geometry.num_axes = 1;
  for (int l : lines) pat.lines.push_back({l, 0});
  pat.requested = static_cast<int>(lines.size());
  return pat;
}

/// Tiny synthetic ensemble with explicitly chosen signals.
Ensemble make_toy_ensemble(const std::vector<double>& mu_nodes,
                           const std::vector<double>& weights,
                           const std::vector<KSpaceSignal>& signals) {
  Ensemble e;
  for (double m : mu_nodes) e.rule.nodes.push_back({m});
  e.rule.weights = weights;
  e.signals = signals;
  return e;
}

} // namespace

TEST_CASE("restriction ordering and round trip") {
  KSpaceSignal sig(2, {4, 4, 1});
  SplitMix64 rng(2);
  for (auto& z : sig.values()) z = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));

  SUBCASE("full pattern covers every sample twice (re, im)") {
    const auto pat = pattern_1d(4, {0, 1, 2, 3});
    const auto v = restrict_to_pattern(sig, pat);
    CHECK(v.size() == 2 * 16);
  }

  SUBCASE("a single line of 4 samples stacks to length 8") {
    const auto pat = pattern_1d(4, {2});
    const auto v = restrict_to_pattern(sig, pat);
    CHECK(v.size() == 8);
  }

  SUBCASE("restrict, zero-pad, restrict reproduces the samples") {
    const auto pat = pattern_1d(4, {3, 1});
    const auto v = restrict_to_pattern(sig, pat);
    const auto padded = scatter_from_pattern(v, pat, 2, {4, 4, 1});
    const auto w = restrict_to_pattern(padded, pat);
    for (Eigen::Index i = 0; i < v.size(); ++i) CHECK(v(i) == w(i));
  }

  SUBCASE("out-of-range line index is a domain error") {
    const auto pat = pattern_1d(4, {7});
    CHECK_THROWS_AS(restrict_to_pattern(sig, pat), DomainError);
  }
}

TEST_CASE("cross covariance") {
  SUBCASE("constant parameters give a zero matrix") {
    std::vector<KSpaceSignal> sigs(2, KSpaceSignal(2, {2, 2, 1}, Complex(1, 1)));
    sigs[1](0, 0) = Complex(5, 2);
    const auto ens = make_toy_ensemble({3.0, 3.0}, {0.5, 0.5}, sigs);
    const auto pat = pattern_1d(2, {0, 1});
    const auto cross = cross_covariance(ens, pat);
    CHECK(cross.rows() == 1);
    CHECK(cross.cols() == 8);
    CHECK(cross.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("two equal-weight nodes with scalar mu and signal give covariance 1") {
    std::vector<KSpaceSignal> sigs(2, KSpaceSignal(2, {2, 2, 1}, Complex(0, 0)));
    sigs[0](0, 0) = Complex(1, 0);
    sigs[1](0, 0) = Complex(3, 0);
    const auto ens = make_toy_ensemble({1.0, 3.0}, {0.5, 0.5}, sigs);
    // phase line holding the DC sample: centered index 1 maps to fft index 0
    const auto pat = pattern_1d(2, {1});
    const auto cross = cross_covariance(ens, pat);
    // samples on the line: readout centered 0..1 -> fft 1, 0; DC is second
    CHECK(cross(0, 2) == doctest::Approx(1.0).epsilon(1e-14));
  }

  SUBCASE("matches a Monte-Carlo covariance on a linear toy within 1%") {
    // signal(mu) = (a + b mu) at 4 samples; mu ~ U[0, 2] via GL nodes
    const auto rule = gauss_legendre(12, 0.0, 2.0);
    std::vector<KSpaceSignal> sigs;
    const Complex a(0.4, -0.2), b(1.5, 0.7);
    for (int q = 0; q < rule.count(); ++q) {
      KSpaceSignal s(2, {2, 2, 1});
      for (std::size_t v = 0; v < s.size(); ++v)
        s[v] = a + b * rule.nodes[q][0] * static_cast<double>(v + 1);
      sigs.push_back(s);
    }
    Ensemble ens;
    ens.rule = rule;
    ens.signals = sigs;
    const auto pat = pattern_1d(2, {0, 1});
    const auto cross = cross_covariance(ens, pat);

    SplitMix64 rng(33);
    const int trials = 2'000'000;
    Eigen::VectorXd mc = Eigen::VectorXd::Zero(8);
    // E[(mu - 1)(sig - E sig)] with E sig = a + b * v * E mu, E mu = 1
    for (int t = 0; t < trials; ++t) {
      const double mu = rng.uniform(0.0, 2.0);
      for (int v = 0; v < 4; ++v) {
        const Complex dev = b * (mu - 1.0) * static_cast<double>(v + 1);
        mc(2 * v) += (mu - 1.0) * dev.real();
        mc(2 * v + 1) += (mu - 1.0) * dev.imag();
      }
    }
    mc /= trials;
    // compare in the restriction ordering
    KSpaceSignal order_probe(2, {2, 2, 1});
    for (std::size_t v = 0; v < order_probe.size(); ++v)
      order_probe[v] = Complex(static_cast<double>(v), 0.0);
    const auto stacked = restrict_to_pattern(order_probe, pat);
    for (int i = 0; i < 8; i += 2) {
      const int v = static_cast<int>(stacked(i));
      CHECK(cross(0, i) == doctest::Approx(mc(2 * v)).epsilon(0.01));
    }
  }
}

TEST_CASE("kalman gain") {
  SUBCASE("zero anomalies give zero gain") {
    AnomalyMatrix anom;
    anom.b = Eigen::MatrixXd::Zero(6, 3);
    anom.mean_r = Eigen::VectorXd::Zero(6);
    const Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(1, 6);
    const auto g = kalman_gain(anom, cross, Eigen::VectorXd::Constant(6, 1.0));
    CHECK(g.k.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("scalar conjugate case: Sigma_UU = Sigma_mu_z = R = 1 gives K = 1/2") {
    AnomalyMatrix anom;
    anom.b = Eigen::MatrixXd::Constant(1, 1, 1.0);
    anom.mean_r = Eigen::VectorXd::Zero(1);
    const Eigen::MatrixXd cross = Eigen::MatrixXd::Constant(1, 1, 1.0);
    const auto g = kalman_gain(anom, cross, Eigen::VectorXd::Constant(1, 1.0));
    CHECK(g.k(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  }

  SUBCASE("Woodbury path equals the dense inverse on random instances") {
    SplitMix64 rng(44);
    for (int trial = 0; trial < 5; ++trial) {
      const int m = 5, n = 40, d = 3;
      AnomalyMatrix anom;
      anom.b.resize(n, m);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) anom.b(i, j) = rng.gaussian();
      anom.mean_r = Eigen::VectorXd::Zero(n);
      Eigen::MatrixXd cross(d, n);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j) cross(i, j) = rng.gaussian();
      Eigen::VectorXd r_diag(n);
      for (int i = 0; i < n; ++i) r_diag(i) = 0.2 + rng.uniform();

      const auto g = kalman_gain(anom, cross, r_diag);
      const Eigen::MatrixXd dense =
          cross * (anom.b * anom.b.transpose() +
                   Eigen::MatrixXd(r_diag.asDiagonal()))
                      .inverse();
      CHECK((g.k - dense).cwiseAbs().maxCoeff() /
                std::max(1.0, dense.cwiseAbs().maxCoeff()) <
            1e-9);
    }
  }
}

TEST_CASE("minimum variance update") {
  SUBCASE("zero observations: posterior equals the prior exactly") {
    ParameterStats prior;
    prior.mean = Eigen::VectorXd::Constant(2, 5.0);
    prior.cov = Eigen::MatrixXd::Identity(2, 2);
    GainOperator g;
    g.k.resize(2, 0);
    g.downdate = Eigen::MatrixXd::Zero(2, 2);
    const auto res =
        minimum_variance_update(prior, g, Eigen::VectorXd(), Eigen::VectorXd(), nullptr);
    CHECK(res.posterior.mean == prior.mean);
    CHECK(res.posterior.cov == prior.cov);
  }

  SUBCASE("scalar conjugate case: posterior mean 1, variance 1/2") {
    ParameterStats prior;
    prior.mean = Eigen::VectorXd::Zero(1);
    prior.cov = Eigen::MatrixXd::Identity(1, 1);
    AnomalyMatrix anom;
    anom.b = Eigen::MatrixXd::Constant(1, 1, 1.0);
    anom.mean_r = Eigen::VectorXd::Zero(1);
    const Eigen::MatrixXd cross = Eigen::MatrixXd::Constant(1, 1, 1.0);
    const auto g = kalman_gain(anom, cross, Eigen::VectorXd::Constant(1, 1.0));
    const auto res = minimum_variance_update(prior, g, Eigen::VectorXd::Constant(1, 2.0),
                                             Eigen::VectorXd::Zero(1), nullptr);
    CHECK(res.posterior.mean(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(res.posterior.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  }

  SUBCASE("linear-Gaussian forward matches the analytic Bayesian posterior") {
    // U = H mu, gaussian prior discretized by a gaussian-weighted GL rule.
    const int d = 2, n = 6;
    Eigen::MatrixXd h_fwd(n, d);
    SplitMix64 rng(55);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) h_fwd(i, j) = rng.gaussian();

    // prior N(mu0, P) with P diagonal
    Eigen::VectorXd mu0(d);
    mu0 << 1.0, -2.0;
    Eigen::MatrixXd p_cov = Eigen::MatrixXd::Zero(d, d);
    p_cov(0, 0) = 0.8;
    p_cov(1, 1) = 1.7;

    // gaussian-weighted tensor rule
    auto axis_rule = [&](double mean, double var) {
      QuadratureRule gl = gauss_legendre(24, mean - 7 * std::sqrt(var), mean + 7 * std::sqrt(var));
      QuadratureRule r;
      double wsum = 0;
      for (int q = 0; q < gl.count(); ++q) {
        const double x = gl.nodes[q][0];
        const double w = gl.weights[q] * std::exp(-(x - mean) * (x - mean) / (2 * var));
        r.nodes.push_back({x});
        r.weights.push_back(w);
        wsum += w;
      }
      for (auto& w : r.weights) w /= wsum;
      return r;
    };
    const auto rule = tensor_rule({axis_rule(mu0(0), p_cov(0, 0)), axis_rule(mu0(1), p_cov(1, 1))});

    // anomalies and cross covariance of the linear forward under the rule
    const ParameterStats prior = prior_stats(rule);
    const int m = rule.count();
    Eigen::MatrixXd b(2 * n, m);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, 2 * n);
    Eigen::VectorXd mean_fwd = Eigen::VectorXd::Zero(2 * n);
    auto stack = [&](const Eigen::VectorXd& cplx_free) {
      // real forward: imaginary components are zero
      Eigen::VectorXd s(2 * n);
      for (int i = 0; i < n; ++i) {
        s(2 * i) = cplx_free(i);
        s(2 * i + 1) = 0.0;
      }
      return s;
    };
    std::vector<Eigen::VectorXd> fwd(m);
    for (int q = 0; q < m; ++q) {
      Eigen::VectorXd node(d);
      node << rule.nodes[q][0], rule.nodes[q][1];
      fwd[q] = stack(h_fwd * node);
      mean_fwd += rule.weights[q] * fwd[q];
    }
    for (int q = 0; q < m; ++q) {
      b.col(q) = std::sqrt(rule.weights[q]) * (fwd[q] - mean_fwd);
      Eigen::VectorXd dev(d);
      dev << rule.nodes[q][0] - prior.mean(0), rule.nodes[q][1] - prior.mean(1);
      cross += rule.weights[q] * dev * (fwd[q] - mean_fwd).transpose();
    }
    AnomalyMatrix anom{b, mean_fwd};

    const double sigma = 0.35;
    const Eigen::VectorXd r_diag = Eigen::VectorXd::Constant(2 * n, sigma * sigma);

    Eigen::VectorXd mu_true(d);
    mu_true << 1.4, -1.1;
    Eigen::VectorXd z = stack(h_fwd * mu_true); // noiseless draw

    const auto g = kalman_gain(anom, cross, r_diag);
    const auto res = minimum_variance_update(prior, g, z, anom.mean_r, nullptr);

    // analytic posterior: only the real rows carry information
    Eigen::MatrixXd hth = h_fwd.transpose() * h_fwd / (sigma * sigma);
    const Eigen::MatrixXd post_cov = (p_cov.inverse() + hth).inverse();
    const Eigen::VectorXd post_mean =
        post_cov * (p_cov.inverse() * mu0 + h_fwd.transpose() * (h_fwd * mu_true) / (sigma * sigma));

    CHECK((res.posterior.mean - post_mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((res.posterior.cov - post_cov).cwiseAbs().maxCoeff() < 1e-8);
  }

  SUBCASE("posterior trace never exceeds the prior trace") {
    SplitMix64 rng(66);
    for (int trial = 0; trial < 20; ++trial) {
      const int d = 3, n = 10, m = 4;
      ParameterStats prior;
      prior.mean = Eigen::VectorXd::Zero(d);
      Eigen::MatrixXd a(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = rng.gaussian();
      prior.cov = a * a.transpose() + Eigen::MatrixXd::Identity(d, d);

      // consistent low-rank system: mu anomalies A (d x m), signal anomalies
      // B = G A for a random linear map G so cross = A W A^T G^T stays exact
      Eigen::MatrixXd nodes(d, m);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < m; ++j) nodes(i, j) = rng.gaussian();
      Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / m);
      Eigen::VectorXd mean = nodes * w;
      Eigen::MatrixXd g_map(2 * n, d);
      for (int i = 0; i < 2 * n; ++i)
        for (int j = 0; j < d; ++j) g_map(i, j) = rng.gaussian();
      Eigen::MatrixXd b(2 * n, m);
      Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, 2 * n);
      for (int q = 0; q < m; ++q) {
        const Eigen::VectorXd dev = nodes.col(q) - mean;
        b.col(q) = std::sqrt(w(q)) * (g_map * dev);
        cross += w(q) * dev * (g_map * dev).transpose();
      }
      // prior consistent with the same discrete ensemble
      prior.cov = Eigen::MatrixXd::Zero(d, d);
      for (int q = 0; q < m; ++q) {
        const Eigen::VectorXd dev = nodes.col(q) - mean;
        prior.cov += w(q) * dev * dev.transpose();
      }
      prior.mean = mean;

      AnomalyMatrix anom{b, Eigen::VectorXd::Zero(2 * n)};
      Eigen::VectorXd r_diag = Eigen::VectorXd::Constant(2 * n, 0.3);
      const auto gain = kalman_gain(anom, cross, r_diag);
      Eigen::VectorXd z(2 * n);
      for (int i = 0; i < 2 * n; ++i) z(i) = rng.gaussian();
      const auto res = minimum_variance_update(prior, gain, z, anom.mean_r, nullptr);
      CHECK(res.posterior.cov.trace() <= prior.cov.trace() + 1e-12);
    }
  }

  SUBCASE("huge noise returns the prior") {
    ParameterStats prior;
    prior.mean = Eigen::VectorXd::Constant(1, 2.0);
    prior.cov = Eigen::MatrixXd::Constant(1, 1, 4.0);
    AnomalyMatrix anom;
    anom.b = Eigen::MatrixXd::Constant(3, 1, 1.0);
    anom.mean_r = Eigen::VectorXd::Zero(3);
    const Eigen::MatrixXd cross = Eigen::MatrixXd::Constant(1, 3, 2.0);
    const auto g = kalman_gain(anom, cross, Eigen::VectorXd::Constant(3, 1e18));
    const auto res = minimum_variance_update(prior, g, Eigen::VectorXd::Constant(3, 10.0),
                                             Eigen::VectorXd::Zero(3), nullptr);
    CHECK(std::abs(res.posterior.mean(0) - 2.0) < 1e-8);
    CHECK(std::abs(res.posterior.cov(0, 0) - 4.0) < 1e-8);
  }

  SUBCASE("posterior mean clamps to the prior support with a flag") {
    ParameterStats prior;
    prior.mean = Eigen::VectorXd::Constant(1, 100.0);
    prior.cov = Eigen::MatrixXd::Constant(1, 1, 1.0);
    GainOperator g;
    g.k = Eigen::MatrixXd::Constant(1, 1, 1.0);
    g.downdate = Eigen::MatrixXd::Zero(1, 1);
    UncertainParameterPrior support;
    support.lower_per_m = {90.0};
    support.upper_per_m = {110.0};
    const auto res = minimum_variance_update(prior, g, Eigen::VectorXd::Constant(1, 50.0),
                                             Eigen::VectorXd::Zero(1), &support);
    CHECK(res.clamped);
    CHECK(res.posterior.mean(0) == 110.0);
  }

  SUBCASE("posterior invariant to line ordering within the pattern") {
    KSpaceSignal sig(2, {4, 4, 1});
    SplitMix64 rng(8);
    for (auto& z : sig.values()) z = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
    std::vector<KSpaceSignal> sigs;
    std::vector<double> mus{1.0, 2.0, 3.0};
    for (double m : mus) {
      KSpaceSignal s = sig;
      for (auto& z : s.values()) z *= m;
      sigs.push_back(s);
    }
    auto ens = make_toy_ensemble(mus, {0.3, 0.4, 0.3}, sigs);
    const ParameterStats prior = prior_stats(ens.rule);

    auto posterior_for = [&](std::vector<int> lines) {
      const auto pat = pattern_1d(4, std::move(lines));
      const auto anom = build_anomalies(ens, pat);
      const auto cross = cross_covariance(ens, pat);
      const auto g =
          kalman_gain(anom, cross, Eigen::VectorXd::Constant(anom.b.rows(), 0.05));
      const auto z = restrict_to_pattern(sig, pat); // "measured" = member template
      return minimum_variance_update(prior, g, z, anom.mean_r, nullptr).posterior;
    };
    const auto a = posterior_for({0, 2, 3});
    const auto b = posterior_for({3, 0, 2});
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("an inconsistent gain trips the indefiniteness guard") {
    ParameterStats prior;
    prior.mean = Eigen::VectorXd::Zero(1);
    prior.cov = Eigen::MatrixXd::Constant(1, 1, 1.0);
    GainOperator g;
    g.k = Eigen::MatrixXd::Constant(1, 1, 1.0);
    g.downdate = Eigen::MatrixXd::Constant(1, 1, 100.0); // far exceeds the prior variance
    CHECK_THROWS_AS(minimum_variance_update(prior, g, Eigen::VectorXd::Constant(1, 1.0),
                                            Eigen::VectorXd::Zero(1), nullptr),
                    NumericalError);
  }
}
