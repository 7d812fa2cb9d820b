#include <doctest.h>

#include <cmath>
#include <set>

#include "mrtherm/fusion.hpp"
#include "mrtherm/rng.hpp"
#include "mrtherm/sampling.hpp"
#include "test_support.hpp"

using namespace mrtherm;
using mrtherm::testing::spearman_rank_correlation;

TEST_CASE("line scores sum the variance map along the readout axis") {
  SUBCASE("zero map gives zero scores") {
    Field<double> vmap(2, {4, 4, 1}, 0.0);
    const auto s = line_scores(vmap, 0);
    for (double v : s.scores) CHECK(v == 0.0);
  }

  SUBCASE("2x2 rows [1,2],[3,4] with readout on axis 0 score [4,6]") {
    Field<double> vmap(2, {2, 2, 1});
    vmap(0, 0) = 1;
    vmap(0, 1) = 2;
    vmap(1, 0) = 3;
    vmap(1, 1) = 4;
    const auto s = line_scores(vmap, 0);
    REQUIRE(s.scores.size() == 2);
    CHECK(s.scores[0] == 4.0);
    CHECK(s.scores[1] == 6.0);
  }

  SUBCASE("a delta spike scores only its own line") {
    Field<double> vmap(2, {8, 8, 1}, 0.0);
    vmap(3, 5) = 7.5;
    const auto s = line_scores(vmap, 0);
    for (int j = 0; j < 8; ++j) CHECK(s.scores[j] == (j == 5 ? 7.5 : 0.0));
  }

  SUBCASE("3-D scores enumerate the (kx, ky) raster with readout on kz") {
    Field<double> vmap(3, {2, 3, 4}, 1.0);
    const auto s = line_scores(vmap, 2);
    CHECK(s.geometry.num_candidates() == 6);
    for (double v : s.scores) CHECK(v == 4.0);
    CHECK(s.geometry.coords(5)[0] == 1);
    CHECK(s.geometry.coords(5)[1] == 2);
  }
}

TEST_CASE("greedy max-variance selection") {
  PhaseGeometry g;
  g.readout_axis = 0;
  g.phase_axes = {1};
  g.extents = {4, 1};
  g.num_axes = 1;

  SUBCASE("top-2 with N_d=1") {
    LineScores s{g, {5, 1, 9, 3}};
    const auto pat = select_lines_maxvar(s, 2, 1);
    REQUIRE(pat.count() == 2);
    CHECK(pat.lines[0][0] == 2);
    CHECK(pat.lines[1][0] == 0);
  }

  SUBCASE("separation constraint blocks the runner-up") {
    LineScores s{g, {5, 4, 3, 0}};
    const auto pat = select_lines_maxvar(s, 2, 2);
    REQUIRE(pat.count() == 2);
    CHECK(pat.lines[0][0] == 0);
    CHECK(pat.lines[1][0] == 2);
  }

  SUBCASE("infeasible N names the achievable maximum") {
    LineScores s{g, {5, 4, 3, 2}};
    try {
      select_lines_maxvar(s, 3, 3);
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find("achievable maximum is 2") != std::string::npos);
    }
  }

  SUBCASE("selection is invariant under positive rescaling of scores") {
    PhaseGeometry g2 = g;
    g2.extents = {16, 1};
    LineScores s{g2, {}};
    SplitMix64 rng(3);
    for (int i = 0; i < 16; ++i) s.scores.push_back(rng.uniform(0.0, 5.0));
    LineScores scaled = s;
    for (auto& v : scaled.scores) v *= 137.0;
    const auto a = select_lines_maxvar(s, 6, 2);
    const auto b = select_lines_maxvar(scaled, 6, 2);
    CHECK(a.lines == b.lines);
  }

  SUBCASE("central-peaked scores concentrate the pattern at the center") {
    PhaseGeometry g2 = g;
    g2.extents = {33, 1};
    LineScores s{g2, {}};
    for (int i = 0; i < 33; ++i) s.scores.push_back(std::exp(-0.05 * (i - 16) * (i - 16)));
    const auto pat = select_lines_maxvar(s, 9, 1);
    for (const auto& line : pat.lines) CHECK(std::abs(line[0] - 16) <= 5);
    validate_pattern(pat);
  }
}

TEST_CASE("rectilinear pattern") {
  PhaseGeometry g;
  g.readout_axis = 0;
  g.phase_axes = {1};
  g.extents = {8, 1};
  g.num_axes = 1;

  SUBCASE("8 candidates, N=4 -> stride 2") {
    const auto pat = rectilinear_pattern(g, 4);
    REQUIRE(pat.count() == 4);
    CHECK(pat.lines[0][0] == 0);
    CHECK(pat.lines[1][0] == 2);
    CHECK(pat.lines[2][0] == 4);
    CHECK(pat.lines[3][0] == 6);
  }

  SUBCASE("N equal to the candidate count samples everything") {
    const auto pat = rectilinear_pattern(g, 8);
    CHECK(pat.count() == 8);
    std::set<int> seen;
    for (const auto& l : pat.lines) seen.insert(l[0]);
    CHECK(seen.size() == 8);
  }

  SUBCASE("N=1 picks index 0") {
    const auto pat = rectilinear_pattern(g, 1);
    REQUIRE(pat.count() == 1);
    CHECK(pat.lines[0][0] == 0);
  }
}

TEST_CASE("variable-density poisson disk pattern") {
  PhaseGeometry g;
  g.readout_axis = 2;
  g.phase_axes = {0, 1};
  g.extents = {32, 32};
  g.num_axes = 2;

  SUBCASE("beta=0 keeps all pairwise distances >= r0") {
    PoissonDiskParams params;
    params.r0 = 3.0;
    params.seed = 11;
    const auto pat = poisson_disk_pattern(g, 40, params);
    CHECK(pat.count() > 10);
    for (int i = 0; i < pat.count(); ++i)
      for (int j = i + 1; j < pat.count(); ++j) {
        const double d = std::hypot(pat.lines[i][0] - pat.lines[j][0],
                                    pat.lines[i][1] - pat.lines[j][1]);
        CHECK(d >= 3.0);
      }
  }

  SUBCASE("same seed reproduces the pattern") {
    PoissonDiskParams params;
    params.r0 = 2.0;
    params.beta = 1.5;
    params.seed = 77;
    const auto a = poisson_disk_pattern(g, 50, params);
    const auto b = poisson_disk_pattern(g, 50, params);
    CHECK(a.lines == b.lines);
    params.seed = 78;
    const auto c = poisson_disk_pattern(g, 50, params);
    CHECK(a.lines != c.lines);
  }

  SUBCASE("beta>0 makes the center denser than the periphery across seeds") {
    PoissonDiskParams params;
    params.r0 = 1.6;
    params.beta = 3.0;
    int central = 0, outer = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      params.seed = seed;
      const auto pat = poisson_disk_pattern(g, 120, params);
      for (const auto& l : pat.lines) {
        const double d = std::hypot(l[0] - 16.0, l[1] - 16.0);
        if (d <= 8.0) ++central;     // central disk, ~20% of the raster area
        else if (d >= 12.0) ++outer; // periphery, larger area
      }
    }
    // density = count / area; central disk area ~201, periphery ~570
    const double central_density = central / 201.0;
    const double outer_density = outer / 570.0;
    CHECK(central_density > outer_density);
  }

  SUBCASE("infeasible request is best-effort with a flag") {
    PoissonDiskParams params;
    params.r0 = 20.0;
    params.seed = 5;
    const auto pat = poisson_disk_pattern(g, 100, params);
    CHECK(pat.best_effort);
    CHECK(pat.count() < 100);
    validate_pattern(pat);
  }
}

TEST_CASE("mutual information reference oracle") {
  SUBCASE("huge noise carries no information") {
    UncertainParameterPrior prior;
    prior.lower_per_m = {100.0};
    prior.upper_per_m = {400.0};
    auto forward = [](double mu, int) { return Complex(mu / 100.0, -mu / 250.0); };
    const auto mi = mutual_information_reference(prior, forward, 4, /*sigma=*/1e6, 48);
    for (double v : mi) {
      CHECK(v < 1e-3);
      CHECK(v > -1e-9);
    }
  }

  SUBCASE("linear-Gaussian toy matches the closed form within 2%") {
    // z = H mu + nu with mu ~ N(0, P): I = 0.5 ln(1 + H^2 P / sigma^2).
    // The Gaussian prior is discretized on a GL grid weighted by the density.
    const double h_gain = 1.0, p_var = 1.0;
    for (double sigma : {0.5, 1.0, 2.0}) {
      QuadratureRule gl = gauss_legendre(64, -8.0 * std::sqrt(p_var), 8.0 * std::sqrt(p_var));
      QuadratureRule rule;
      double wsum = 0.0;
      for (int q = 0; q < gl.count(); ++q) {
        const double x = gl.nodes[q][0];
        const double w = gl.weights[q] * std::exp(-x * x / (2.0 * p_var));
        rule.nodes.push_back({x});
        rule.weights.push_back(w);
        wsum += w;
      }
      for (auto& w : rule.weights) w /= wsum;

      std::vector<std::vector<Complex>> forward(1, std::vector<Complex>(rule.count()));
      for (int q = 0; q < rule.count(); ++q)
        forward[0][q] = Complex(h_gain * rule.nodes[q][0], 0.0);

      const auto mi = mutual_information_reference(rule, forward, sigma);
      const double exact = 0.5 * std::log(1.0 + h_gain * h_gain * p_var / (sigma * sigma));
      CHECK(std::abs(mi[0] - exact) / exact < 0.02);
    }
  }

  SUBCASE("MI is nonnegative up to integration error") {
    UncertainParameterPrior prior;
    prior.lower_per_m = {50.0};
    prior.upper_per_m = {150.0};
    SplitMix64 rng(19);
    auto forward = [&](double mu, int k) {
      return Complex(std::sin(0.01 * mu * (k + 1)), std::cos(0.013 * mu * (k + 1)));
    };
    const auto mi = mutual_information_reference(prior, forward, 8, 0.3, 48);
    for (double v : mi) CHECK(v > -1e-9);
  }

  SUBCASE("k-point and budget caps raise domain errors") {
    UncertainParameterPrior prior;
    prior.lower_per_m = {1.0};
    prior.upper_per_m = {2.0};
    auto forward = [](double mu, int) { return Complex(mu, 0.0); };
    CHECK_THROWS_AS(mutual_information_reference(prior, forward, 65, 1.0), DomainError);
    MiBudget tiny;
    tiny.max_evals = 10;
    CHECK_THROWS_AS(mutual_information_reference(prior, forward, 4, 1.0, 64, tiny), DomainError);
  }
}

TEST_CASE("per-point variance ranks k-space like the MI oracle") {
  // 1-parameter planar toy: both the ensemble variance and the reference MI
  // are computed at 16 k-points spanning the informative-to-flat range.
  using namespace mrtherm::testing;
  PhantomOptions opt;
  opt.dims = {16, 16};
  opt.spacing = {2e-3, 2e-3};
  opt.power_w = 11.85;
  const Phantom p = make_phantom(opt);
  const MrProtocol pr = planar_protocol();
  const double fusion_t = 30.0;

  SolverSettings s;
  s.output_times_s = {fusion_t};

  // forward map evaluated on the MI rule's own nodes
  QuadratureRule mu_rule = gauss_legendre(32, 100.0, 400.0);
  const Field<double> u_ref(p.grid, 37.0);
  std::vector<KSpaceSignal> signals;
  for (int q = 0; q < mu_rule.count(); ++q) {
    SolverSettings ss = s;
    const auto hist = solve_pennes(p, mu_rule.nodes[q], ss);
    signals.push_back(kspace_forward(
        complex_image(hist.fields.back(), u_ref, p.labels, p.tissues, pr), p.grid.voxel_volume()));
  }

  // 16 probe points: walk out from DC along both k axes
  std::vector<std::pair<int, int>> probes;
  for (int step = 0; step < 8; ++step) {
    probes.emplace_back(step, 0);
    probes.emplace_back(0, step + 1);
  }

  std::vector<std::vector<Complex>> forward(probes.size(),
                                            std::vector<Complex>(mu_rule.count()));
  for (std::size_t k = 0; k < probes.size(); ++k)
    for (int q = 0; q < mu_rule.count(); ++q)
      forward[k][q] = signals[q](probes[k].first, probes[k].second);

  // per-point ensemble variance at the same probes, from the same nodes
  std::vector<double> variance(probes.size(), 0.0);
  for (std::size_t k = 0; k < probes.size(); ++k) {
    Complex mean(0, 0);
    for (int q = 0; q < mu_rule.count(); ++q) mean += mu_rule.weights[q] * forward[k][q];
    for (int q = 0; q < mu_rule.count(); ++q)
      variance[k] += mu_rule.weights[q] * std::norm(forward[k][q] - mean);
  }

  const double sigma = std::abs(signals[mu_rule.count() / 2][0]) / (25.0 * std::sqrt(2.0));
  const auto mi = mutual_information_reference(mu_rule, forward, sigma);

  const double rho = spearman_rank_correlation(variance, mi);
  CHECK(rho >= 0.9);
}
