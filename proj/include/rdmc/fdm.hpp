// ============================================================================
// fdm.hpp -- explicit finite-difference reference solver (the validation
// oracle): forward Euler in time, central differences in space, pointwise
// reaction terms, zero-Dirichlet truncation boundary.
//
// The solver refines the time axis internally to satisfy the diffusion CFL
// bound dt <= safety * dx^2 / (2 dim D_max) and down-samples back to the
// comparison grid.  Rendered source slices are injected as impulses when the
// fine time crosses each coarse level, which reproduces the perturbation
// solver's convention that a delta at t_j is fully present at t_j+.
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fields.hpp"
#include "perturb.hpp"

namespace rdmc {

struct FdmConfig {
  SpaceTimeGrid grid;
  double stability_safety = 0.9;  // fraction of the CFL limit to use
  int force_substeps = 0;         // 0 = auto; explicit value is CFL-checked
};

struct FdmResult {
  Assembled fields;
  RunMeta meta;  // cfl_number and substeps in k_used
};

namespace detail {

/// Reaction right-hand side for one scenario, applied pointwise.
struct Reaction {
  const SpeciesSystem& sys;
  void operator()(double a, double b, double c, double& ra, double& rb, double& rc) const {
    const double lam = sys.lambda, gam = sys.gamma;
    switch (sys.scenario) {
      case Scenario::MAC_ABC: {
        const double f = -lam * a * b + gam * lam * c;
        ra = f;
        rb = f;
        rc = -f;
        break;
      }
      case Scenario::TWO_WAY_AB: {
        const double f = -lam * a * b;
        ra = f;
        rb = f;
        rc = 0;
        break;
      }
      case Scenario::AMPLIFY_ABC: {
        const double cb = sys.beta == 1 ? c : (sys.beta == 2 ? c * c : std::pow(c, sys.beta));
        const double ac = a * c, bcb = b * cb;
        ra = -lam * ac;
        rb = -lam * gam * bcb;
        rc = -lam * (ac + gam * bcb);
        break;
      }
    }
  }
};

inline void add_laplacian(const std::vector<double>& u, const SpaceTimeGrid& g, double coef,
                          std::vector<double>& out) {
  const double k = coef / (g.dx * g.dx);
  std::int64_t stride = 1;
  for (int a = 0; a < g.dim; ++a) {
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      const std::int64_t i_a = (s / stride) % g.nx;
      const double left = i_a > 0 ? u[std::size_t(s - stride)] : 0.0;
      const double right = i_a + 1 < g.nx ? u[std::size_t(s + stride)] : 0.0;
      out[std::size_t(s)] += k * (left - 2.0 * u[std::size_t(s)] + right);
    }
    stride *= g.nx;
  }
}

}  // namespace detail

/// One explicit step g + dt (D lap g + R(g) + f) from spatial states and
/// source slices f(., 0).  States and sources are n_space arrays (empty means
/// zero); returns the three updated states (third empty for TWO_WAY).
inline std::array<std::vector<double>, 3> fdm_one_step(
    const SpeciesSystem& sys, const SpaceTimeGrid& grid,
    const std::array<const std::vector<double>*, 3>& state,
    const std::array<const std::vector<double>*, 3>& sources, double dt) {
  if (!(dt > 0)) throw ValidationError("dt must be positive");
  const std::int64_t n = grid.n_space();
  const int nsp = sys.n_species();
  std::array<std::vector<double>, 3> cur;
  for (int k = 0; k < nsp; ++k) {
    if (state[std::size_t(k)] && !state[std::size_t(k)]->empty()) {
      if (std::int64_t(state[std::size_t(k)]->size()) != n)
        throw GridMismatch("state size mismatch");
      cur[std::size_t(k)] = *state[std::size_t(k)];
    } else {
      cur[std::size_t(k)].assign(std::size_t(n), 0.0);
    }
  }
  std::array<std::vector<double>, 3> rhs;
  for (int k = 0; k < nsp; ++k) rhs[std::size_t(k)].assign(std::size_t(n), 0.0);
  const double dcoef[3] = {sys.d_a, sys.d_b, sys.d_c};
  for (int k = 0; k < nsp; ++k) detail::add_laplacian(cur[std::size_t(k)], grid, dcoef[k], rhs[std::size_t(k)]);
  detail::Reaction react{sys};
  for (std::int64_t s = 0; s < n; ++s) {
    double ra, rb, rc;
    react(cur[0][std::size_t(s)], cur[1][std::size_t(s)], nsp == 3 ? cur[2][std::size_t(s)] : 0.0, ra, rb, rc);
    rhs[0][std::size_t(s)] += ra;
    rhs[1][std::size_t(s)] += rb;
    if (nsp == 3) rhs[2][std::size_t(s)] += rc;
  }
  for (int k = 0; k < nsp; ++k) {
    const auto* src = sources[std::size_t(k)];
    for (std::int64_t s = 0; s < n; ++s) {
      double f = (src && !src->empty()) ? (*src)[std::size_t(s)] : 0.0;
      cur[std::size_t(k)][std::size_t(s)] += dt * (rhs[std::size_t(k)][std::size_t(s)] + f);
    }
  }
  return cur;
}

/// Full explicit solve.  Throws UnstableConfiguration when a forced substep
/// count violates the CFL bound and NegativeBlowup when any concentration
/// falls below -0.01 * running max.
inline FdmResult fdm_solve(const SpeciesSystem& sys, const Waveform& wa, const Waveform& wb,
                           const Waveform* wc, const FdmConfig& cfg,
                           const InitialState* init = nullptr) {
  sys.validate();
  const SpaceTimeGrid& g = cfg.grid;
  if (sys.dim != g.dim) throw GridMismatch("system/grid dimension mismatch");
  const double dt_stable = cfg.stability_safety * g.dx * g.dx / (2.0 * g.dim * sys.d_max());
  int m = cfg.force_substeps > 0 ? cfg.force_substeps : std::max(1, int(std::ceil(g.dt / dt_stable)));
  const double dt_f = g.dt / m;
  if (dt_f > dt_stable * (1 + 1e-12))
    throw UnstableConfiguration("dt_f " + std::to_string(dt_f) + " exceeds CFL limit " +
                                std::to_string(dt_stable));

  const Field f_a = discretize_waveform(wa, g);
  const Field f_b = discretize_waveform(wb, g);
  Field f_c;
  if (wc) f_c = discretize_waveform(*wc, g);

  const int nsp = sys.n_species();
  const std::int64_t n = g.n_space();
  std::array<std::vector<double>, 3> cur;
  for (int k = 0; k < nsp; ++k) cur[std::size_t(k)].assign(std::size_t(n), 0.0);
  if (init) {
    if (!init->a.empty()) cur[0] = init->a;
    if (!init->b.empty()) cur[1] = init->b;
    if (nsp == 3 && !init->c.empty()) cur[2] = init->c;
  }

  FdmResult out;
  out.fields.a = Field(g, "A");
  out.fields.b = Field(g, "B");
  if (nsp == 3) out.fields.c = Field(g, "C");
  out.meta.k_used = m;
  out.meta.cfl_number = dt_f * 2.0 * g.dim * sys.d_max() / (g.dx * g.dx);

  std::array<std::vector<double>, 3> rhs;
  for (int k = 0; k < nsp; ++k) rhs[std::size_t(k)].assign(std::size_t(n), 0.0);
  const double dcoef[3] = {sys.d_a, sys.d_b, sys.d_c};
  detail::Reaction react{sys};
  double run_max = 0;

  auto record = [&](int j) {
    std::copy(cur[0].begin(), cur[0].end(), out.fields.a.slice(j));
    std::copy(cur[1].begin(), cur[1].end(), out.fields.b.slice(j));
    if (nsp == 3) std::copy(cur[2].begin(), cur[2].end(), out.fields.c.slice(j));
    double lo = 0;
    for (int k = 0; k < nsp; ++k)
      for (double v : cur[std::size_t(k)]) {
        run_max = std::max(run_max, v);
        lo = std::min(lo, v);
      }
    if (lo < -0.01 * run_max)
      throw NegativeBlowup("concentration " + std::to_string(lo) + " at t=" +
                           std::to_string(g.time(j)) + " (running max " + std::to_string(run_max) +
                           ")");
  };

  for (int j = 0; j <= g.nt; ++j) {
    // impulse injection: the full mass dt * f[j] lands when crossing t_j
    const Field* srcs[3] = {&f_a, &f_b, wc ? &f_c : nullptr};
    for (int k = 0; k < nsp; ++k) {
      if (!srcs[k]) continue;
      const double* sl = srcs[k]->slice(j);
      for (std::int64_t s = 0; s < n; ++s) cur[std::size_t(k)][std::size_t(s)] += g.dt * sl[s];
    }
    record(j);
    if (j == g.nt) break;
    for (int step = 0; step < m; ++step) {
      for (int k = 0; k < nsp; ++k) {
        std::fill(rhs[std::size_t(k)].begin(), rhs[std::size_t(k)].end(), 0.0);
        detail::add_laplacian(cur[std::size_t(k)], g, dcoef[k], rhs[std::size_t(k)]);
      }
      for (std::int64_t s = 0; s < n; ++s) {
        double ra, rb, rc;
        react(cur[0][std::size_t(s)], cur[1][std::size_t(s)], nsp == 3 ? cur[2][std::size_t(s)] : 0.0, ra, rb,
              rc);
        rhs[0][std::size_t(s)] += ra;
        rhs[1][std::size_t(s)] += rb;
        if (nsp == 3) rhs[2][std::size_t(s)] += rc;
      }
      for (int k = 0; k < nsp; ++k)
        for (std::int64_t s = 0; s < n; ++s) cur[std::size_t(k)][std::size_t(s)] += dt_f * rhs[std::size_t(k)][std::size_t(s)];
    }
  }
  return out;
}

// ============================================================================
// Validation curves
// ============================================================================
/// Max over sampled t of |X_fdm - X_series(n)| / |X_fdm| at a probe point,
/// with |X_fdm| below 1e-12 * its own peak excluded.  The series coefficients
/// are lambda-independent, so one series serves the whole lambda list; the
/// FDM oracle is re-run per lambda.
struct ProbeCurveConfig {
  std::array<double, 3> probe{0, 0, 0};
  int order_n = 1;
  int species = 2;                // 0 = A, 1 = B, 2 = C
  double stability_safety = 0.9;
  bool split_series = false;      // evaluate the series with auto-splitting
};

inline std::vector<double> probe_series(const Field& f, const std::array<double, 3>& probe) {
  std::array<int, 3> idx{0, 0, 0};
  for (int a = 0; a < f.grid.dim; ++a) idx[a] = f.grid.node_index(probe[a]);
  const std::int64_t s = f.grid.flat(idx);
  std::vector<double> out(std::size_t(f.grid.nt) + 1);
  for (int j = 0; j <= f.grid.nt; ++j) out[std::size_t(j)] = f.at(j, s);
  return out;
}

inline double max_relative_error(const std::vector<double>& oracle,
                                 const std::vector<double>& approx, double floor_frac = 1e-12,
                                 int j_begin = 0, int j_end = -1) {
  double peak = 0;
  for (double v : oracle) peak = std::max(peak, std::abs(v));
  const double floor = floor_frac * peak;
  double worst = 0;
  const int hi = j_end < 0 ? int(oracle.size()) - 1 : j_end;
  for (int j = j_begin; j <= hi; ++j) {
    if (std::abs(oracle[std::size_t(j)]) <= floor) continue;
    worst = std::max(worst,
                     std::abs(oracle[std::size_t(j)] - approx[std::size_t(j)]) / std::abs(oracle[std::size_t(j)]));
  }
  return worst;
}

inline std::vector<std::pair<double, double>> relative_error_curve(
    const SpeciesSystem& sys0, const SpaceTimeGrid& grid, const Waveform& wa, const Waveform& wb,
    const std::vector<double>& lambda_list, const ProbeCurveConfig& cfg) {
  // series orders once (coefficients don't depend on lambda)
  SpeciesSystem sys = sys0;
  sys.lambda = 0;
  SeriesSolver solver(sys, grid);
  const Field f_a = discretize_waveform(wa, grid);
  const Field f_b = discretize_waveform(wb, grid);
  SeriesSolution ss = solver.solve_order0(f_a, f_b);
  for (int i = 1; i <= cfg.order_n; ++i) solver.extend(ss, i);

  std::vector<std::pair<double, double>> out;
  out.reserve(lambda_list.size());
  for (double lam : lambda_list) {
    SpeciesSystem sl = sys0;
    sl.lambda = lam;
    const auto fdm = fdm_solve(sl, wa, wb, nullptr, {grid, cfg.stability_safety});
    const Field& fdm_field =
        cfg.species == 0 ? fdm.fields.a : (cfg.species == 1 ? fdm.fields.b : fdm.fields.c);
    const Field per = assemble(ss.species(cfg.species), lam, cfg.order_n);
    out.emplace_back(lam, max_relative_error(probe_series(fdm_field, cfg.probe),
                                             probe_series(per, cfg.probe)));
  }
  return out;
}

/// Largest grid time T' with relative error <= threshold for all t <= T'
/// (sub-floor oracle values skipped).  T' = 0 when violated immediately.
inline double t_max_of(const std::vector<double>& oracle, const std::vector<double>& approx,
                       double threshold, double dt, double floor_frac = 1e-12) {
  double peak = 0;
  for (double v : oracle) peak = std::max(peak, std::abs(v));
  const double floor = floor_frac * peak;
  for (std::size_t j = 0; j < oracle.size(); ++j) {
    if (std::abs(oracle[j]) <= floor) continue;
    if (std::abs(oracle[j] - approx[j]) / std::abs(oracle[j]) > threshold)
      return double(j == 0 ? 0 : j - 1) * dt;
  }
  return double(oracle.size() - 1) * dt;
}

enum class SweepParameter { LAMBDA, D_C };

inline std::vector<std::pair<double, double>> t_max_sweep(
    const SpeciesSystem& sys0, const SpaceTimeGrid& grid, const Waveform& wa, const Waveform& wb,
    const std::vector<double>& values, SweepParameter which, double threshold,
    const ProbeCurveConfig& cfg) {
  if (!(threshold > 0 && threshold < 1)) throw ValidationError("threshold must be in (0,1)");
  std::vector<std::pair<double, double>> out;
  out.reserve(values.size());
  for (double v : values) {
    SpeciesSystem sys = sys0;
    (which == SweepParameter::LAMBDA ? sys.lambda : sys.d_c) = v;
    SpeciesSystem szero = sys;
    szero.lambda = 0;
    SeriesSolver solver(szero, grid);
    const Field f_a = discretize_waveform(wa, grid);
    const Field f_b = discretize_waveform(wb, grid);
    SeriesSolution ss = solver.solve_order0(f_a, f_b);
    for (int i = 1; i <= cfg.order_n; ++i) solver.extend(ss, i);
    const Field per = assemble(ss.species(cfg.species), sys.lambda, cfg.order_n);
    const auto fdm = fdm_solve(sys, wa, wb, nullptr, {grid, cfg.stability_safety});
    const Field& fdm_field =
        cfg.species == 0 ? fdm.fields.a : (cfg.species == 1 ? fdm.fields.b : fdm.fields.c);
    out.emplace_back(v, t_max_of(probe_series(fdm_field, cfg.probe),
                                 probe_series(per, cfg.probe), threshold, grid.dt));
  }
  return out;
}

}  // namespace rdmc
