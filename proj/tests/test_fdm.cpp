#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rdmc/fdm.hpp"

using namespace rdmc;

namespace {

SpeciesSystem table3_system() {
  SpeciesSystem sys;
  sys.dim = 1;
  sys.d_a = 1e-9;
  sys.d_b = 7e-10;
  sys.d_c = 1e-10;
  sys.lambda = 1e-22;
  sys.gamma = 0;
  return sys;
}

Waveform delta_at(double mass, double x) {
  Waveform w;
  w.deltas.push_back({0.0, mass, {x, 0, 0}});
  return w;
}

std::vector<double> gaussian_profile(const SpaceTimeGrid& g, double center, double sigma,
                                     double peak) {
  std::vector<double> v(std::size_t(g.n_space()));
  for (int i = 0; i < g.nx; ++i) {
    const double x = g.coord(i) - center;
    v[std::size_t(i)] = peak * std::exp(-x * x / (2 * sigma * sigma));
  }
  return v;
}

}  // namespace

TEST_CASE("one step from zero state and zero sources is zero") {
  SpeciesSystem sys = table3_system();
  const auto g = make_grid(1, 5e-4, 64, 1.0, 10);
  const auto out = fdm_one_step(sys, g, {nullptr, nullptr, nullptr}, {nullptr, nullptr, nullptr},
                                1e-3);
  for (int k = 0; k < 3; ++k)
    for (double v : out[std::size_t(k)]) CHECK(v == 0.0);
}

TEST_CASE("one diffusion step conserves mass") {
  SpeciesSystem sys = table3_system();
  sys.lambda = 0;
  const auto g = make_grid(1, 5e-4, 256, 1.0, 10);
  const auto ga = gaussian_profile(g, 0.0, 5e-5, 1e9);
  const double dt = 0.4 * g.dx * g.dx / (2 * sys.d_a);
  const auto out =
      fdm_one_step(sys, g, {&ga, nullptr, nullptr}, {nullptr, nullptr, nullptr}, dt);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    m0 += ga[i];
    m1 += out[0][i];
  }
  CHECK(m1 == Catch::Approx(m0).epsilon(1e-9));
}

TEST_CASE("one reaction step is pointwise exact on constant fields") {
  SpeciesSystem sys = table3_system();
  sys.lambda = 2e-10;
  const auto g = make_grid(1, 5e-4, 64, 1.0, 10);
  const double c = 3e4;
  std::vector<double> st(std::size_t(g.n_space()), c);
  const double dt = 1e-3;
  const auto out = fdm_one_step(sys, g, {&st, &st, nullptr}, {nullptr, nullptr, nullptr}, dt);
  // interior nodes see a zero Laplacian; the boundary feels the Dirichlet ghost
  for (int i = 2; i < g.nx - 2; ++i)
    CHECK(out[0][std::size_t(i)] == Catch::Approx(c - dt * sys.lambda * c * c).epsilon(1e-14));
}

TEST_CASE("pure diffusion run matches the heat kernel") {
  SpeciesSystem sys = table3_system();
  sys.lambda = 0;
  const auto g = make_grid(1, 6e-4, 192, 1.0, 50);
  const auto res = fdm_solve(sys, delta_at(5e8, 0.0), Waveform{}, nullptr, {g, 0.8});
  const Field ref = kernel_field({1, sys.d_a}, g);
  for (int j = 10; j <= g.nt; j += 10) {
    // compare within two standard deviations of the peak
    const double sigma = std::sqrt(2 * sys.d_a * g.time(j));
    const int span = std::max(2, int(2 * sigma / g.dx));
    for (int i = g.nx / 2 - span; i <= g.nx / 2 + span; i += std::max(1, span / 4)) {
      const double want = 5e8 * ref.at(j, i);
      CHECK(res.fields.a.at(j, i) == Catch::Approx(want).epsilon(0.02));
    }
  }
  CHECK(res.meta.cfl_number <= 0.8 + 1e-12);
}

TEST_CASE("zero sources give identically zero fields") {
  SpeciesSystem sys = table3_system();
  const auto g = make_grid(1, 5e-4, 64, 1.0, 20);
  const auto res = fdm_solve(sys, Waveform{}, Waveform{}, nullptr, {g, 0.9});
  CHECK(res.fields.a.max_abs() == 0.0);
  CHECK(res.fields.b.max_abs() == 0.0);
  CHECK(res.fields.c.max_abs() == 0.0);
}

TEST_CASE("lambda 0 mass conservation over the run") {
  SpeciesSystem sys = table3_system();
  sys.lambda = 0;
  const auto g = make_grid(1, 8e-4, 128, 2.0, 100);
  const auto res = fdm_solve(sys, delta_at(5e8, 0.0), Waveform{}, nullptr, {g, 0.9});
  double first = 0, last = 0;
  for (std::int64_t s = 0; s < g.n_space(); ++s) {
    first += res.fields.a.at(0, s);
    last += res.fields.a.at(g.nt, s);
  }
  CHECK(last == Catch::Approx(first).epsilon(1e-6));
}

TEST_CASE("reaction converts without destroying A plus C mass") {
  SpeciesSystem sys = table3_system();
  sys.lambda = 3e-13;  // strong enough to convert a visible fraction
  const auto g = make_grid(1, 8e-4, 128, 2.0, 100);
  const auto res =
      fdm_solve(sys, delta_at(5e8, 0.0), delta_at(2.4e9, 1e-4), nullptr, {g, 0.9});
  double a0 = 0, ac_last = 0;
  for (std::int64_t s = 0; s < g.n_space(); ++s) {
    a0 += res.fields.a.at(0, s);
    ac_last += res.fields.a.at(g.nt, s) + res.fields.c.at(g.nt, s);
  }
  CHECK(res.fields.c.at(g.nt, g.node_index(5e-5)) > 0);
  CHECK(ac_last == Catch::Approx(a0).epsilon(1e-4));
}

TEST_CASE("forced substeps below the CFL limit are rejected") {
  SpeciesSystem sys = table3_system();
  const auto g = make_grid(1, 5e-4, 256, 1.0, 10);  // dt = 0.1 >> CFL limit
  FdmConfig cfg{g, 0.9, 1};
  CHECK_THROWS_AS(fdm_solve(sys, delta_at(1e8, 0.0), Waveform{}, nullptr, cfg),
                  UnstableConfiguration);
}

TEST_CASE("runaway reaction triggers the negativity guard") {
  SpeciesSystem sys = table3_system();
  sys.lambda = 1e-6;  // reaction timescale far below dt: explicit blowup
  const auto g = make_grid(1, 5e-4, 32, 1.0, 10);
  CHECK_THROWS_AS(
      fdm_solve(sys, delta_at(5e8, 0.0), delta_at(5e8, 1e-5), nullptr, {g, 0.9}),
      NegativeBlowup);
}

TEST_CASE("relative error is zero at lambda 0") {
  SpeciesSystem sys = table3_system();
  const auto g = make_grid(1, 5e-4, 64, 1.0, 20);
  ProbeCurveConfig cfg;
  cfg.probe = {5e-5, 0, 0};
  cfg.order_n = 1;
  const auto curve =
      relative_error_curve(sys, g, delta_at(5e8, 0.0), delta_at(2.4e9, 1e-4), {0.0}, cfg);
  REQUIRE(curve.size() == 1);
  CHECK(curve[0].second == 0.0);
}

TEST_CASE("relative error grows with lambda") {
  SpeciesSystem sys = table3_system();
  sys.d_a = sys.d_b = sys.d_c = 1e-9;
  const auto g = make_grid(1, 6e-4, 96, 2.0, 40);
  ProbeCurveConfig cfg;
  cfg.probe = {5e-5, 0, 0};
  cfg.order_n = 1;
  const std::vector<double> lams = {1e-18, 1e-16, 1e-15, 3e-15};
  const auto curve =
      relative_error_curve(sys, g, delta_at(5e8, 0.0), delta_at(2.4e9, 1e-4), lams, cfg);
  for (std::size_t i = 1; i < curve.size(); ++i)
    CHECK(curve[i].second >= curve[i - 1].second * (1 - 1e-12));
}

TEST_CASE("t_max covers the horizon at lambda 0 and shrinks with lambda") {
  SpeciesSystem sys = table3_system();
  sys.d_a = sys.d_b = sys.d_c = 1e-9;
  const auto g = make_grid(1, 6e-4, 96, 2.0, 40);
  ProbeCurveConfig cfg;
  cfg.probe = {5e-5, 0, 0};
  cfg.order_n = 1;
  const auto sweep = t_max_sweep(sys, g, delta_at(5e8, 0.0), delta_at(2.4e9, 1e-4),
                                 {0.0, 1e-15, 1e-14}, SweepParameter::LAMBDA, 0.05, cfg);
  CHECK(sweep[0].second == Catch::Approx(g.t_end));
  CHECK(sweep[1].second >= sweep[2].second);
}

TEST_CASE("first-order series and one FDM step agree at order dt^2") {
  // Theorem-1 contract: || assemble(1)(., dt) - fdm_one_step(., dt) ||_inf
  // shrinks ~4x per halving of dt.
  SpeciesSystem sys;
  sys.dim = 1;
  sys.d_a = 1e-9;
  sys.d_b = 7e-10;
  sys.d_c = 5e-10;
  sys.lambda = 4e-10;
  sys.gamma = 0.3;

  const double sigma0 = 6e-5;
  const int nx = 128;
  const double extent = 6e-4;

  auto defect = [&](double dt_step) {
    const auto g = make_grid(1, extent, nx, dt_step, 512);
    InitialState init;
    init.a = gaussian_profile(g, -5e-5, sigma0, 2e9);
    init.b = gaussian_profile(g, 5e-5, sigma0, 1.5e9);
    init.c = gaussian_profile(g, 0.0, sigma0, 4e8);
    // spatially uniform sources keep the source part of the comparison exact
    Waveform wa, wb;
    wa.envelope = {3e8, 3e8};
    wa.envelope_t_end = dt_step;
    wa.envelope_everywhere = true;
    wb.envelope = {2e8, 2e8};
    wb.envelope_t_end = dt_step;
    wb.envelope_everywhere = true;
    SolveOptions opts;
    opts.orders = 1;
    opts.remainder = false;
    const auto series = solve_plain(sys, g, wa, wb, nullptr, &init, opts);

    std::vector<double> f0a(std::size_t(g.n_space()), 3e8), f0b(std::size_t(g.n_space()), 2e8);
    const auto step = fdm_one_step(sys, g, {&init.a, &init.b, &init.c}, {&f0a, &f0b, nullptr},
                                   dt_step);
    // interior sup: the zero-padded box clips kernel mass near the edges
    double worst = 0;
    for (std::int64_t s = nx / 4; s < 3 * nx / 4; ++s)
      worst = std::max(worst, std::abs(series.fields.a.at(g.nt, s) - step[0][std::size_t(s)]));
    return worst;
  };

  const double dt0 = 0.2 * sigma0 * sigma0 / sys.d_a;
  const double d0 = defect(dt0), d1 = defect(dt0 / 2), d2 = defect(dt0 / 4);
  CHECK(d0 / d1 > 2.8);
  CHECK(d0 / d1 < 5.5);
  CHECK(d1 / d2 > 2.8);
  CHECK(d1 / d2 < 5.5);
}
