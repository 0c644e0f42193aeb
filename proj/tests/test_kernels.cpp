#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rdmc/kernels.hpp"

using namespace rdmc;

namespace {

// Brute-force oracle: the causal rectangle-sum convolution evaluated
// directly, independent of the FFT path.
Field conv_direct(const Field& u, const Field& v) {
  const SpaceTimeGrid& g = u.grid;
  Field out(g, "direct");
  double cell = g.dt;
  for (int a = 0; a < g.dim; ++a) cell *= g.dx;
  const int origin = g.nx / 2;
  auto decode = [&](std::int64_t s, std::array<int, 3>& idx) {
    for (int a = 0; a < g.dim; ++a) {
      idx[std::size_t(a)] = int(s % g.nx);
      s /= g.nx;
    }
  };
  std::array<int, 3> mi{0, 0, 0}, si{0, 0, 0};
  for (int j = 0; j <= g.nt; ++j)
    for (std::int64_t m = 0; m < g.n_space(); ++m) {
      decode(m, mi);
      double acc = 0;
      for (int jp = 0; jp <= j; ++jp)
        for (std::int64_t s = 0; s < g.n_space(); ++s) {
          decode(s, si);
          bool ok = true;
          std::int64_t flat = 0;
          for (int a = g.dim - 1; a >= 0; --a) {
            const int d = mi[std::size_t(a)] - si[std::size_t(a)] + origin;
            if (d < 0 || d >= g.nx) {
              ok = false;
              break;
            }
            flat = flat * g.nx + d;
          }
          if (ok) acc += u.at(jp, s) * v.at(j - jp, flat);
        }
      out.at(j, m) = acc * cell;
    }
  return out;
}

Field random_field(const SpaceTimeGrid& g, unsigned seed) {
  Field f(g, "rnd");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : f.values) v = u(rng);
  return f;
}

double max_rel_diff(const Field& a, const Field& b) {
  double scale = std::max(a.max_abs(), b.max_abs());
  if (scale == 0) return 0;
  double worst = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    worst = std::max(worst, std::abs(a.values[i] - b.values[i]) / scale);
  return worst;
}

}  // namespace

TEST_CASE("closed-form kernel values") {
  HeatKernel k{1, 1e-9};
  CHECK(eval_kernel(k, {0, 0, 0}, 1.0) == Catch::Approx(8920.62).epsilon(1e-5));
  CHECK(eval_kernel(k, {0, 0, 0}, -0.5) == 0.0);
  CHECK(eval_kernel(k, {1e-3, 0, 0}, 0.0) == 0.0);
  const double x = std::sqrt(4e-9);
  CHECK(eval_kernel(k, {x, 0, 0}, 1.0) ==
        Catch::Approx(8920.62 * std::exp(-1.0)).epsilon(1e-5));
  HeatKernel k3{3, 2e-9};
  CHECK(eval_kernel(k3, {0, 0, 0}, 2.0) ==
        Catch::Approx(std::pow(4 * M_PI * 2e-9 * 2.0, -1.5)).epsilon(1e-12));
}

TEST_CASE("kernel field mass is one at every time level") {
  // box obeys the 6-sigma rule for T = 3, D = 1e-9
  const auto g = make_grid(1, 5e-4, 96, 3.0, 30);
  const Field f = kernel_field({1, 1e-9}, g);
  for (int j = 0; j <= g.nt; ++j) {
    double mass = 0;
    for (std::int64_t s = 0; s < g.n_space(); ++s) mass += f.at(j, s);
    CHECK(mass * g.dx == Catch::Approx(1.0).epsilon(1e-6));
  }
  // cell averaging keeps mass exact even when sigma << dx
  const auto gc = make_grid(1, 5e-4, 24, 3.0, 300);
  const Field fc = kernel_field({1, 1e-10}, gc);
  double mass = 0;
  for (std::int64_t s = 0; s < gc.n_space(); ++s) mass += fc.at(1, s);
  CHECK(mass * gc.dx == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("kernel field mass is one in 2-D and 3-D") {
  const auto g2 = make_grid(2, 4e-4, 48, 2.0, 8);
  const Field f2 = kernel_field({2, 1e-9}, g2);
  double m2 = 0;
  for (std::int64_t s = 0; s < g2.n_space(); ++s) m2 += f2.at(g2.nt, s);
  CHECK(m2 * g2.dx * g2.dx == Catch::Approx(1.0).epsilon(1e-6));
  const auto g3 = make_grid(3, 3e-4, 24, 1.0, 4);
  const Field f3 = kernel_field({3, 1e-9}, g3);
  double m3 = 0;
  for (std::int64_t s = 0; s < g3.n_space(); ++s) m3 += f3.at(g3.nt, s);
  CHECK(m3 * std::pow(g3.dx, 3) == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("kernel satisfies the heat equation at second order") {
  // residual d_t phi - D lap phi measured with central differences shrinks
  // ~4x when dx is halved with dt ~ dx^2
  const double D = 1e-9;
  auto residual = [&](int nx, int nt) {
    const auto g = make_grid(1, 4e-4, nx, 2.0, nt);
    const HeatKernel k{1, D};
    double worst = 0;
    for (int j = nt / 2 - 2; j <= nt / 2 + 2; ++j) {
      const double t = g.time(j);
      for (int i = nx / 4; i < 3 * nx / 4; ++i) {
        const double x = g.coord(i);
        const double dt_term =
            (eval_kernel(k, {x, 0, 0}, t + g.dt) - eval_kernel(k, {x, 0, 0}, t - g.dt)) /
            (2 * g.dt);
        const double lap =
            (eval_kernel(k, {x - g.dx, 0, 0}, t) - 2 * eval_kernel(k, {x, 0, 0}, t) +
             eval_kernel(k, {x + g.dx, 0, 0}, t)) /
            (g.dx * g.dx);
        worst = std::max(worst, std::abs(dt_term - D * lap));
      }
    }
    return worst;
  };
  const double r1 = residual(64, 50);
  const double r2 = residual(128, 200);  // dx/2, dt/4
  CHECK(r1 / r2 > 2.5);
  CHECK(r1 / r2 < 6.5);
}

TEST_CASE("discrete delta is the identity of **") {
  const auto g = make_grid(1, 2e-4, 16, 1.0, 12);
  Waveform w;
  w.deltas.push_back({0.0, 1.0, {0, 0, 0}});
  const Field delta = discretize_waveform(w, g);
  const Field v = random_field(g, 11);
  const Field conv = conv_space_time(delta, v);
  CHECK(max_rel_diff(conv, v) < 1e-12);
}

TEST_CASE("convolution of zero fields is zero") {
  const auto g = make_grid(1, 2e-4, 16, 1.0, 12);
  const Field z(g, "z");
  const Field v = random_field(g, 3);
  CHECK(conv_space_time(z, v).max_abs() == 0.0);
  CHECK(conv_space_time(v, z).max_abs() == 0.0);
}

TEST_CASE("all-ones 1-D convolution matches the direct sum on an 8x8 grid") {
  const auto g = make_grid(1, 2e-4, 8, 1.0, 7);
  Field u(g, "u");
  u.values.assign(u.values.size(), 1.0);
  const Field direct = conv_direct(u, u);
  const Field fast = conv_space_time(u, u);
  double worst = 0;
  for (std::size_t i = 0; i < fast.values.size(); ++i)
    worst = std::max(worst, std::abs(fast.values[i] - direct.values[i]));
  CHECK(worst < 1e-10 * direct.max_abs());
}

TEST_CASE("FFT convolution equals direct summation on random fields") {
  for (unsigned seed = 0; seed < 4; ++seed) {
    const int dim = 1 + int(seed % 3);
    const int nx = dim == 3 ? 8 : (dim == 2 ? 12 : 16);
    const auto g = make_grid(dim, 2e-4, nx, 1.0, 6);
    const Field u = random_field(g, 100 + seed);
    const Field v = random_field(g, 200 + seed);
    const Field direct = conv_direct(u, v);
    CHECK(max_rel_diff(conv_space_time(u, v, detail::ConvBackend::FULL_FFT), direct) < 1e-10);
    CHECK(max_rel_diff(conv_space_time(u, v, detail::ConvBackend::SLICE_FFT), direct) < 1e-10);
  }
}

TEST_CASE("convolution is commutative") {
  const auto g = make_grid(2, 2e-4, 10, 1.0, 5);
  const Field u = random_field(g, 5), v = random_field(g, 6);
  CHECK(max_rel_diff(conv_space_time(u, v), conv_space_time(v, u)) < 1e-12);
}

TEST_CASE("grid mismatch is rejected") {
  const auto g1 = make_grid(1, 2e-4, 16, 1.0, 8);
  const auto g2 = make_grid(1, 2e-4, 16, 1.0, 9);
  CHECK_THROWS_AS(conv_space_time(Field(g1, "u"), Field(g2, "v")), GridMismatch);
}

TEST_CASE("index convolution expands the Cauchy pairing") {
  const auto g = make_grid(1, 1e-4, 4, 1.0, 2);
  auto constant = [&](double c) {
    Field f(g, "c");
    f.values.assign(f.values.size(), c);
    return f;
  };
  const std::vector<Field> u = {constant(1), constant(2)};
  const std::vector<Field> v = {constant(3), constant(4)};
  CHECK(index_conv(u, v, 1).values[0] == Catch::Approx(3.0));
  CHECK(index_conv(u, v, 2).values[0] == Catch::Approx(1. * 4 + 2. * 3));
  const std::vector<Field> ones = {constant(1), constant(1), constant(1)};
  CHECK(index_conv(ones, ones, 3).values[0] == Catch::Approx(3.0));
  CHECK_THROWS_AS(index_conv(u, v, 3), LengthMismatch);
}
