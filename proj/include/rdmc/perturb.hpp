// ============================================================================
// perturb.hpp -- power-series (perturbation) solver for the three
// reaction-diffusion scenarios
//
// The concentration of each species is expanded as sum_i lambda^i [X]_i.
// Order coefficients are lambda-independent and satisfy linear diffusion
// equations solved by kernel convolution:
//
//   MAC_ABC      [A]_0 = phi_A ** f_A, [B]_0 = phi_B ** f_B, [C]_0 = 0
//                S_i   = (A *^d B)_{i-1} - gamma [C]_{i-1}
//                [A]_i = -phi_A ** S_i, [B]_i = -phi_B ** S_i,
//                [C]_i = +phi_C ** S_i
//   TWO_WAY_AB   two species, S_i = (A *^d B)_{i-1}
//   AMPLIFY_ABC  A + C -> P1, B + beta C -> P2 (series powers of C via
//                Cauchy products)
//
// Initial conditions are carried the way the amplification example treats
// them: [X]_0 = phi_X ** (f_X + D_X lap I_X) + I_X with a central-difference
// Laplacian, which is also what the time-splitting driver uses to chain
// subintervals.
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fields.hpp"
#include "kernels.hpp"

namespace rdmc {

// ============================================================================
// Convergence bounds (Lemma 1)
// ============================================================================
struct ConvergenceBounds {
  double m0 = 0, n0 = 0, g0 = 0, h0 = 0, sigma = 0;
  double lambda_max = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double max_abs_slice(const Field& f, int j) {
  const double* sl = f.slice(j);
  double m = 0;
  for (std::int64_t s = 0; s < f.grid.n_space(); ++s) m = std::max(m, std::abs(sl[s]));
  return m;
}

inline double max_abs_dt(const Field& f) {
  double m = 0;
  const double inv = 1.0 / f.grid.dt;
  for (int j = 0; j < f.grid.nt; ++j) {
    const double *a = f.slice(j), *b = f.slice(j + 1);
    for (std::int64_t s = 0; s < f.grid.n_space(); ++s)
      m = std::max(m, std::abs((b[s] - a[s]) * inv));
  }
  return m;
}

inline double max_abs_dx(const Field& f) {
  const SpaceTimeGrid& g = f.grid;
  double m = 0;
  const double inv = 1.0 / g.dx;
  std::int64_t stride = 1;
  for (int a = 0; a < g.dim; ++a) {
    for (int j = 0; j <= g.nt; ++j) {
      const double* sl = f.slice(j);
      for (std::int64_t s = 0; s < g.n_space(); ++s) {
        const std::int64_t i_a = (s / stride) % g.nx;
        if (i_a + 1 < g.nx) m = std::max(m, std::abs((sl[s + stride] - sl[s]) * inv));
      }
    }
    stride *= g.nx;
  }
  return m;
}

}  // namespace detail

/// Lemma-1 constants for rendered sources and the series' radius of
/// convergence lambda_max = 1 / (T (12 M0 + 10 gamma)).
inline ConvergenceBounds convergence_bounds(const SpeciesSystem& sys, const Field& f_a,
                                            const Field& f_b, double T) {
  if (!f_a.all_finite() || !f_b.all_finite()) throw NonFiniteField("source fields must be finite");
  ConvergenceBounds cb;
  const double fa = f_a.max_abs(), fb = f_b.max_abs();
  cb.m0 = T * std::max(fa, fb);
  cb.n0 = std::max(T * detail::max_abs_dt(f_a) + detail::max_abs_slice(f_a, 0),
                   T * detail::max_abs_dt(f_b) + detail::max_abs_slice(f_b, 0));
  const double ka = std::sqrt(4.0 * T / (M_PI * sys.d_a));
  const double kb = std::sqrt(4.0 * T / (M_PI * sys.d_b));
  cb.g0 = std::max(ka * fa, kb * fb);
  cb.h0 = std::max(ka * detail::max_abs_dx(f_a), kb * detail::max_abs_dx(f_b));
  double dmin = std::min(sys.d_a, sys.d_b);
  if (sys.scenario != Scenario::TWO_WAY_AB) dmin = std::min(dmin, sys.d_c);
  cb.sigma = std::sqrt(4.0 * T / (M_PI * dmin));
  const double denom = T * (12.0 * cb.m0 + 10.0 * sys.gamma);
  cb.lambda_max = denom > 0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
  return cb;
}

// ============================================================================
// Example 1 analytic oracle
// ============================================================================
/// Coefficients alpha_0 = 1, alpha_i = sum_{j<i} alpha_j alpha_{i-1-j} / (2i+1).
inline std::vector<double> example1_alphas(int n) {
  std::vector<double> a(std::size_t(n) + 1);
  a[0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    double s = 0;
    for (int j = 0; j < i; ++j) s += a[std::size_t(j)] * a[std::size_t(i - 1 - j)];
    a[std::size_t(i)] = s / double(2 * i + 1);
  }
  return a;
}

/// Closed-form series prefix sum_{i<=n} lambda^i (-1)^i alpha_i t^(2i+1) for
/// the constant-source, equal-diffusion, gamma = 0 configuration.
inline double example1_oracle(double lambda, double t, int n) {
  if (n < 0 || t < 0) throw ValidationError("example1_oracle needs n >= 0, t >= 0");
  const auto alpha = example1_alphas(n);
  double sum = 0, lam_pow = 1;
  for (int i = 0; i <= n; ++i) {
    const double term = lam_pow * alpha[std::size_t(i)] * std::pow(t, 2 * i + 1);
    sum += (i % 2 == 0) ? term : -term;
    lam_pow *= lambda;
  }
  return sum;
}

// ============================================================================
// Series solution
// ============================================================================
struct SeriesSolution {
  Scenario scenario = Scenario::MAC_ABC;
  double lambda = 0;
  int n_max = -1;
  double t_start = 0, t_end = 0;
  std::vector<Field> a, b, c;  // orders 0..n_max; c empty for TWO_WAY_AB
  ConvergenceBounds bounds;

  [[nodiscard]] const std::vector<Field>& species(int k) const { return k == 0 ? a : (k == 1 ? b : c); }
};

/// Pointwise sum_{i<=n} lambda^i X_i for one species list.
inline Field assemble(const std::vector<Field>& orders, double lambda, int n) {
  if (n < 0 || n >= int(orders.size()))
    throw OrderUnavailable("assemble: order " + std::to_string(n) + " not computed");
  Field out(orders.front().grid, orders.front().species);
  double lam_pow = 1;
  for (int i = 0; i <= n; ++i) {
    const auto& v = orders[std::size_t(i)].values;
    for (std::size_t s = 0; s < v.size(); ++s) out.values[s] += lam_pow * v[s];
    lam_pow *= lambda;
  }
  return out;
}

struct Assembled {
  Field a, b, c;  // c defaulted (empty) for TWO_WAY_AB
};

inline Assembled assemble_all(const SeriesSolution& ss, double lambda, int n) {
  Assembled out;
  out.a = assemble(ss.a, lambda, n);
  out.a.species = "A";
  out.b = assemble(ss.b, lambda, n);
  out.b.species = "B";
  if (!ss.c.empty()) {
    out.c = assemble(ss.c, lambda, n);
    out.c.species = "C";
  }
  return out;
}

// ============================================================================
// Solver
// ============================================================================
/// Optional per-species initial spatial states (each empty or n_space long).
struct InitialState {
  std::vector<double> a, b, c;
  [[nodiscard]] bool empty() const { return a.empty() && b.empty() && c.empty(); }
};

namespace detail {

/// Central-difference Laplacian with zero (Dirichlet) ghost values.
inline std::vector<double> laplacian(const std::vector<double>& u, const SpaceTimeGrid& g) {
  std::vector<double> out(u.size(), 0.0);
  const double inv_dx2 = 1.0 / (g.dx * g.dx);
  std::int64_t stride = 1;
  for (int a = 0; a < g.dim; ++a) {
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      const std::int64_t i_a = (s / stride) % g.nx;
      const double left = i_a > 0 ? u[std::size_t(s - stride)] : 0.0;
      const double right = i_a + 1 < g.nx ? u[std::size_t(s + stride)] : 0.0;
      out[std::size_t(s)] += (left - 2.0 * u[std::size_t(s)] + right) * inv_dx2;
    }
    stride *= g.nx;
  }
  return out;
}

/// Render a waveform restricted to the window [t0, t0+g.t_end] onto `g`
/// (window times shifted to grid-local time).  `final_window` decides whether
/// a delta exactly at the right edge belongs to this window.
inline Field render_window(const Waveform& w, const SpaceTimeGrid& g, double t0,
                           bool final_window, SnapReport* report = nullptr) {
  const double t1 = t0 + g.t_end;
  Waveform local;
  local.mass_budget = std::numeric_limits<double>::infinity();
  for (const auto& d : w.deltas) {
    const bool inside = d.time >= t0 && (final_window ? d.time <= t1 : d.time < t1);
    if (!inside) continue;
    DeltaRelease shifted = d;
    shifted.time = d.time - t0;
    local.deltas.push_back(shifted);
  }
  Field f = discretize_waveform(local, g, report);
  if (!w.envelope.empty()) {
    double cell = g.dt;
    for (int a = 0; a < g.dim; ++a) cell *= g.dx;
    std::int64_t s0 = -1;
    if (!w.envelope_everywhere) {
      std::array<int, 3> idx{0, 0, 0};
      for (int a = 0; a < g.dim; ++a) idx[a] = g.node_index(w.envelope_location[a]);
      s0 = g.flat(idx);
    }
    for (int j = 1; j <= g.nt; ++j) {
      const double mass = w.envelope_integral(t0 + g.time(j - 1), t0 + g.time(j));
      if (mass == 0) continue;
      if (s0 >= 0)
        f.at(j, s0) += mass / cell;
      else {
        const double v = mass / g.dt;
        double* sl = f.slice(j);
        for (std::int64_t s = 0; s < g.n_space(); ++s) sl[s] += v;
      }
    }
  }
  return f;
}

/// Cauchy-product coefficient lists of C^beta from the coefficients of C,
/// truncated at order `n`.
inline std::vector<Field> series_power(const std::vector<Field>& c, int beta, int n) {
  std::vector<Field> p(c.begin(), c.begin() + std::min<std::size_t>(c.size(), std::size_t(n) + 1));
  for (int m = 1; m < beta; ++m) {
    std::vector<Field> q;
    q.reserve(std::size_t(n) + 1);
    for (int i = 0; i <= n && i < int(p.size()); ++i) {
      Field acc(c.front().grid, "cpow");
      for (int j = 0; j <= i; ++j) {
        const auto& u = p[std::size_t(j)].values;
        const auto& v = c[std::size_t(i - j)].values;
        for (std::size_t s = 0; s < acc.values.size(); ++s) acc.values[s] += u[s] * v[s];
      }
      q.push_back(std::move(acc));
    }
    p = std::move(q);
  }
  return p;
}

inline void axpy(Field& y, double alpha, const Field& x) {
  for (std::size_t s = 0; s < y.values.size(); ++s) y.values[s] += alpha * x.values[s];
}

}  // namespace detail

/// Computes series coefficients for one system on one grid.  The kernels are
/// rendered once at construction.
class SeriesSolver {
 public:
  SeriesSolver(const SpeciesSystem& sys, const SpaceTimeGrid& grid) : sys_(sys), grid_(grid) {
    sys_.validate();
    if (sys.dim != grid.dim) throw GridMismatch("system/grid dimension mismatch");
    kern_a_ = kernel_field({grid.dim, sys.d_a}, grid);
    kern_b_ = kernel_field({grid.dim, sys.d_b}, grid);
    if (sys.n_species() == 3) kern_c_ = kernel_field({grid.dim, sys.d_c}, grid);
  }

  [[nodiscard]] const SpaceTimeGrid& grid() const { return grid_; }
  [[nodiscard]] const SpeciesSystem& system() const { return sys_; }

  /// Zero-order fields from rendered sources and optional initial states.
  SeriesSolution solve_order0(const Field& f_a, const Field& f_b, const Field* f_c = nullptr,
                              const InitialState* init = nullptr) const {
    f_a.require_same_grid(f_b);
    if (f_c) f_a.require_same_grid(*f_c);
    SeriesSolution ss;
    ss.scenario = sys_.scenario;
    ss.lambda = sys_.lambda;
    ss.t_end = grid_.t_end;
    ss.bounds = convergence_bounds(sys_, f_a, f_b, grid_.t_end);

    ss.a.push_back(order0_one(kern_a_, sys_.d_a, f_a, init ? &init->a : nullptr, "A0"));
    ss.b.push_back(order0_one(kern_b_, sys_.d_b, f_b, init ? &init->b : nullptr, "B0"));
    if (sys_.n_species() == 3) {
      // MAC has no C source: [C]_0 = 0 unless an initial condition is carried.
      Field zero(grid_, "C0");
      const Field& fc = f_c ? *f_c : zero;
      ss.c.push_back(order0_one(kern_c_, sys_.d_c, fc, init ? &init->c : nullptr, "C0"));
    }
    ss.n_max = 0;
    return ss;
  }

  /// Append order i (requires orders 0..i-1 present).
  void extend(SeriesSolution& ss, int i) const {
    if (i < 1 || ss.n_max < i - 1)
      throw MissingPriorOrder("order " + std::to_string(i) + " needs 0.." + std::to_string(i - 1));
    if (ss.n_max >= i) return;
    switch (sys_.scenario) {
      case Scenario::MAC_ABC: {
        Field s = index_conv(ss.a, ss.b, i);
        if (sys_.gamma != 0) detail::axpy(s, -sys_.gamma, ss.c[std::size_t(i) - 1]);
        ss.a.push_back(negate(conv_space_time(kern_a_, s), "A" + std::to_string(i)));
        ss.b.push_back(negate(conv_space_time(kern_b_, s), "B" + std::to_string(i)));
        Field ci = conv_space_time(kern_c_, s);
        ci.species = "C" + std::to_string(i);
        ss.c.push_back(std::move(ci));
        break;
      }
      case Scenario::TWO_WAY_AB: {
        const Field s = index_conv(ss.a, ss.b, i);
        ss.a.push_back(negate(conv_space_time(kern_a_, s), "A" + std::to_string(i)));
        ss.b.push_back(negate(conv_space_time(kern_b_, s), "B" + std::to_string(i)));
        break;
      }
      case Scenario::AMPLIFY_ABC: {
        const Field ac = index_conv(ss.a, ss.c, i);
        const auto cpow = detail::series_power(ss.c, sys_.beta, i - 1);
        const Field bc = index_conv(ss.b, cpow, i);
        ss.a.push_back(negate(conv_space_time(kern_a_, ac), "A" + std::to_string(i)));
        Field sc = ac;
        detail::axpy(sc, sys_.gamma, bc);
        ss.c.push_back(negate(conv_space_time(kern_c_, sc), "C" + std::to_string(i)));
        Field bi = negate(conv_space_time(kern_b_, bc), "B" + std::to_string(i));
        for (auto& v : bi.values) v *= sys_.gamma;
        ss.b.push_back(std::move(bi));
        break;
      }
    }
    ss.n_max = i;
  }

  /// One Picard step: applies the integral-form operator tau to (a, b, c).
  /// Zero initial conditions assumed.
  Assembled picard_step(const Assembled& cur, const Field& f_a, const Field& f_b,
                        const Field* f_c = nullptr) const {
    cur.a.require_same_grid(f_a);
    cur.a.require_same_grid(cur.b);
    const double lam = sys_.lambda, gam = sys_.gamma;
    Assembled out;
    switch (sys_.scenario) {
      case Scenario::MAC_ABC: {
        cur.a.require_same_grid(cur.c);
        Field ab(grid_, "ab");
        for (std::size_t s = 0; s < ab.values.size(); ++s)
          ab.values[s] = cur.a.values[s] * cur.b.values[s];
        Field src_ab = f_a;  // -lambda a b + lambda gamma c + f_A
        for (std::size_t s = 0; s < src_ab.values.size(); ++s)
          src_ab.values[s] += -lam * ab.values[s] + lam * gam * cur.c.values[s];
        out.a = conv_space_time(kern_a_, src_ab);
        Field src_b = f_b;
        for (std::size_t s = 0; s < src_b.values.size(); ++s)
          src_b.values[s] += -lam * ab.values[s] + lam * gam * cur.c.values[s];
        out.b = conv_space_time(kern_b_, src_b);
        Field src_c(grid_, "c_src");
        for (std::size_t s = 0; s < src_c.values.size(); ++s)
          src_c.values[s] = lam * ab.values[s] - gam * lam * cur.c.values[s];
        out.c = conv_space_time(kern_c_, src_c);
        break;
      }
      case Scenario::TWO_WAY_AB: {
        Field src_a = f_a, src_b = f_b;
        for (std::size_t s = 0; s < src_a.values.size(); ++s) {
          const double ab = cur.a.values[s] * cur.b.values[s];
          src_a.values[s] -= lam * ab;
          src_b.values[s] -= lam * ab;
        }
        out.a = conv_space_time(kern_a_, src_a);
        out.b = conv_space_time(kern_b_, src_b);
        break;
      }
      case Scenario::AMPLIFY_ABC: {
        cur.a.require_same_grid(cur.c);
        Field src_a = f_a, src_b = f_b;
        Field src_c = f_c ? *f_c : Field(grid_, "c_src");
        for (std::size_t s = 0; s < src_a.values.size(); ++s) {
          const double cb = std::pow(cur.c.values[s], sys_.beta);
          const double ac = cur.a.values[s] * cur.c.values[s];
          const double bcb = cur.b.values[s] * cb;
          src_a.values[s] -= lam * ac;
          src_b.values[s] -= lam * gam * bcb;
          src_c.values[s] -= lam * (ac + gam * bcb);
        }
        out.a = conv_space_time(kern_a_, src_a);
        out.b = conv_space_time(kern_b_, src_b);
        out.c = conv_space_time(kern_c_, src_c);
        break;
      }
    }
    out.a.species = "A";
    out.b.species = "B";
    if (sys_.n_species() == 3) out.c.species = "C";
    return out;
  }

 private:
  Field order0_one(const Field& kern, double diffusion, const Field& source,
                   const std::vector<double>* init, const std::string& label) const {
    Field src = source;
    const bool has_init = init && !init->empty();
    if (has_init) {
      if (std::int64_t(init->size()) != grid_.n_space())
        throw GridMismatch("initial state size mismatch");
      // carry-over: phi ** (f + D lap I) + I, the Laplacian source active on
      // slices 1..nt like any continuous source
      const auto lap = detail::laplacian(*init, grid_);
      for (int j = 1; j <= grid_.nt; ++j) {
        double* sl = src.slice(j);
        for (std::int64_t s = 0; s < grid_.n_space(); ++s) sl[s] += diffusion * lap[std::size_t(s)];
      }
    }
    Field out = conv_space_time(kern, src);
    if (has_init)
      for (int j = 0; j <= grid_.nt; ++j) {
        double* sl = out.slice(j);
        for (std::int64_t s = 0; s < grid_.n_space(); ++s) sl[s] += (*init)[std::size_t(s)];
      }
    out.species = label;
    return out;
  }

  static Field negate(Field f, const std::string& label) {
    for (auto& v : f.values) v = -v;
    f.species = label;
    return f;
  }

  SpeciesSystem sys_;
  SpaceTimeGrid grid_;
  Field kern_a_, kern_b_, kern_c_;
};

// ============================================================================
// Spec-level convenience wrappers
// ============================================================================
inline SeriesSolution solve_order0(const SpeciesSystem& sys, const Field& f_a, const Field& f_b,
                                   const Field* f_c = nullptr,
                                   const InitialState* init = nullptr) {
  return SeriesSolver(sys, f_a.grid).solve_order0(f_a, f_b, f_c, init);
}

inline void solve_order_i(const SpeciesSystem& sys, SeriesSolution& prior, int i) {
  SeriesSolver solver(sys, prior.a.front().grid);
  for (int k = prior.n_max + 1; k <= i; ++k) solver.extend(prior, k);
}

// ============================================================================
// Full solve with radius policy and time splitting
// ============================================================================
struct SolveOptions {
  int orders = 2;               // truncation order n
  bool allow_split = false;     // auto-split when lambda >= lambda_max
  bool override_radius = false; // proceed even when lambda >= lambda_max
  int force_k = 0;              // fixed number of subintervals (0 = policy)
  bool remainder = true;        // compute order n+1 for the remainder estimate
};

struct RunMeta {
  double lambda_max = 0;
  double remainder_estimate = 0;  // lambda^{n+1} ||X_{n+1}||_inf / ||sum||_inf (max over species)
  int k_used = 1;
  int orders = 0;
  double cfl_number = 0;  // filled by the FDM driver only
};

struct SolveOutcome {
  Assembled fields;
  std::optional<SeriesSolution> series;  // absent for split runs (per-interval series)
  RunMeta meta;
};

namespace detail {

inline double remainder_estimate(const SeriesSolution& ss, const Assembled& asm_fields,
                                 double lambda, int n) {
  if (ss.n_max < n + 1) return std::numeric_limits<double>::quiet_NaN();
  double worst = 0;
  const int nsp = ss.c.empty() ? 2 : 3;
  for (int k = 0; k < nsp; ++k) {
    const Field& next = ss.species(k)[std::size_t(n) + 1];
    const Field& total = k == 0 ? asm_fields.a : (k == 1 ? asm_fields.b : asm_fields.c);
    const double denom = total.max_abs();
    if (denom > 0) worst = std::max(worst, std::pow(lambda, n + 1) * next.max_abs() / denom);
  }
  return worst;
}

}  // namespace detail

/// Perturbation solve on one interval (no splitting).
inline SolveOutcome solve_plain(const SpeciesSystem& sys, const SpaceTimeGrid& grid,
                                const Waveform& wa, const Waveform& wb,
                                const Waveform* wc = nullptr, const InitialState* init = nullptr,
                                const SolveOptions& opts = {}) {
  SeriesSolver solver(sys, grid);
  const Field f_a = discretize_waveform(wa, grid);
  const Field f_b = discretize_waveform(wb, grid);
  Field f_c;
  if (wc) f_c = discretize_waveform(*wc, grid);
  SeriesSolution ss = solver.solve_order0(f_a, f_b, wc ? &f_c : nullptr, init);
  const int extra = opts.remainder ? 1 : 0;
  for (int i = 1; i <= opts.orders + extra; ++i) solver.extend(ss, i);

  SolveOutcome out;
  out.fields = assemble_all(ss, sys.lambda, opts.orders);
  out.meta.lambda_max = ss.bounds.lambda_max;
  out.meta.orders = opts.orders;
  out.meta.remainder_estimate =
      opts.remainder ? detail::remainder_estimate(ss, out.fields, sys.lambda, opts.orders)
                     : std::numeric_limits<double>::quiet_NaN();
  out.series = std::move(ss);
  return out;
}

/// Sequential solve on k subintervals, chaining assembled end states as
/// initial conditions (the only initial-condition treatment the paper gives).
inline SolveOutcome solve_split(const SpeciesSystem& sys, const SpaceTimeGrid& grid,
                                const Waveform& wa, const Waveform& wb, int k,
                                const Waveform* wc = nullptr, const SolveOptions& opts = {}) {
  if (k < 1) throw SubintervalTooCoarse("k must be >= 1");
  if (grid.nt % k != 0 || grid.nt / k < 2)
    throw SubintervalTooCoarse("need nt divisible by k with >= 2 samples per subinterval");
  if (k == 1) {
    SolveOutcome out = solve_plain(sys, grid, wa, wb, wc, nullptr, opts);
    out.meta.k_used = 1;
    return out;
  }

  const int nt_sub = grid.nt / k;
  const SpaceTimeGrid sub = make_grid(grid.dim, grid.extent, grid.nx, grid.t_end / k, nt_sub);
  SeriesSolver solver(sys, sub);

  SolveOutcome out;
  out.fields.a = Field(grid, "A");
  out.fields.b = Field(grid, "B");
  if (sys.n_species() == 3) out.fields.c = Field(grid, "C");
  out.meta.k_used = k;
  out.meta.orders = opts.orders;
  out.meta.lambda_max = 0;
  out.meta.remainder_estimate = 0;

  InitialState carry;
  const int extra = opts.remainder ? 1 : 0;
  for (int piece = 0; piece < k; ++piece) {
    const double t0 = grid.t_end * double(piece) / double(k);
    const bool final_piece = piece == k - 1;
    const Field f_a = detail::render_window(wa, sub, t0, final_piece);
    const Field f_b = detail::render_window(wb, sub, t0, final_piece);
    Field f_c;
    if (wc) f_c = detail::render_window(*wc, sub, t0, final_piece);
    SeriesSolution ss =
        solver.solve_order0(f_a, f_b, wc ? &f_c : nullptr, piece == 0 ? nullptr : &carry);
    for (int i = 1; i <= opts.orders + extra; ++i) solver.extend(ss, i);
    Assembled piece_fields = assemble_all(ss, sys.lambda, opts.orders);
    if (piece == 0) out.meta.lambda_max = ss.bounds.lambda_max;
    if (opts.remainder)
      out.meta.remainder_estimate =
          std::max(out.meta.remainder_estimate,
                   detail::remainder_estimate(ss, piece_fields, sys.lambda, opts.orders));

    const int j0 = piece * nt_sub;
    auto stitch = [&](Field& dst, const Field& src) {
      for (int j = piece == 0 ? 0 : 1; j <= nt_sub; ++j)
        std::copy(src.slice(j), src.slice(j) + grid.n_space(), dst.slice(j0 + j));
    };
    stitch(out.fields.a, piece_fields.a);
    stitch(out.fields.b, piece_fields.b);
    if (sys.n_species() == 3) stitch(out.fields.c, piece_fields.c);

    carry.a.assign(piece_fields.a.slice(nt_sub), piece_fields.a.slice(nt_sub) + grid.n_space());
    carry.b.assign(piece_fields.b.slice(nt_sub), piece_fields.b.slice(nt_sub) + grid.n_space());
    if (sys.n_species() == 3)
      carry.c.assign(piece_fields.c.slice(nt_sub), piece_fields.c.slice(nt_sub) + grid.n_space());
  }
  return out;
}

/// Radius-policy front end: refuses lambda >= lambda_max unless splitting is
/// enabled (k = ceil(lambda/lambda_max) + 1) or the caller overrides.
inline SolveOutcome solve(const SpeciesSystem& sys, const SpaceTimeGrid& grid, const Waveform& wa,
                          const Waveform& wb, const Waveform* wc = nullptr,
                          const SolveOptions& opts = {}) {
  if (opts.force_k > 1) return solve_split(sys, grid, wa, wb, opts.force_k, wc, opts);
  const Field f_a = discretize_waveform(wa, grid);
  const Field f_b = discretize_waveform(wb, grid);
  const ConvergenceBounds cb = convergence_bounds(sys, f_a, f_b, grid.t_end);
  if (sys.lambda >= cb.lambda_max && !opts.override_radius) {
    if (!opts.allow_split)
      throw ConvergenceRadiusExceeded(
          "lambda " + std::to_string(sys.lambda) + " >= lambda_max " +
          std::to_string(cb.lambda_max) + "; enable splitting or pass the override flag");
    int k = int(std::ceil(sys.lambda / cb.lambda_max)) + 1;
    while (k <= grid.nt / 2 && grid.nt % k != 0) ++k;  // align to the time grid
    if (k > grid.nt / 2 || grid.nt % k != 0)
      throw SubintervalTooCoarse("cannot split nt=" + std::to_string(grid.nt) + " into k=" +
                                 std::to_string(k) + " subintervals");
    return solve_split(sys, grid, wa, wb, k, wc, opts);
  }
  return solve_plain(sys, grid, wa, wb, wc, nullptr, opts);
}

}  // namespace rdmc
