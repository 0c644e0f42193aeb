// ============================================================================
// modulate.hpp -- release-waveform optimization for the three scenarios:
// two-delta MAC designs, channel-amplification designs, two-way designs,
// plus the constant-pulse baseline.
//
// The first-order receiver response to unit impulses released at (t_i, t_j),
//
//   G(t_i,t_j) = lambda * [phi_C ** (phi_A(.,.-t_i) phi_B(.-d_B,.-t_j))](d_R, T),
//
// is evaluated on the solver grid by a reduced sum.  Every factor is a
// separable Gaussian, so the spatial inner sum factorizes per axis and one
// entry costs O(nt * dim * nx) regardless of dimension.  Optimizers search a
// coarse time grid (precomputed G-table, bilinearly interpolated during
// refinement) with deterministic coordinate descent; returned designs are
// re-evaluated exactly and the reported error probability is exact for the
// returned design.
// ============================================================================
#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "detect.hpp"
#include "errors.hpp"
#include "fields.hpp"
#include "kernels.hpp"
#include "perturb.hpp"

namespace rdmc {

// ============================================================================
// Geometry
// ============================================================================
/// Transmitter A sits at the origin; B at tx_b; the receiver samples at rx
/// with Poisson mean sample_volume * concentration at time grid.t_end.
struct MacGeometry {
  std::array<double, 3> tx_b{0, 0, 0};
  std::array<double, 3> rx{0, 0, 0};
  double sample_volume = 1.0;
};

namespace detail {

/// Per-axis kernel slice table for a release at time t0 from axis coordinate
/// src (snapped to the grid like any rendered delta): w[j][i] is the
/// cell-averaged 1-D kernel at displacement coord(i) - snap(src), elapsed
/// t_j - t0.  Slices with negative elapsed time are zero; elapsed zero is the
/// discrete delta.
inline std::vector<std::vector<double>> axis_slices(double diffusion, const SpaceTimeGrid& g,
                                                    double src, double t0) {
  std::vector<std::vector<double>> w(static_cast<std::size_t>(g.nt) + 1);
  const int src_node = g.node_index(src);
  const double src_x = g.coord(src_node);
  for (int j = 0; j <= g.nt; ++j) {
    auto& row = w[std::size_t(j)];
    const double tau = g.time(j) - t0;
    if (tau < 0) continue;  // stays empty = zero
    row.assign(std::size_t(g.nx), 0.0);
    if (tau == 0) {
      row[std::size_t(src_node)] = 1.0 / g.dx;
      continue;
    }
    const double inv_s = 1.0 / std::sqrt(4.0 * diffusion * tau);
    for (int i = 0; i < g.nx; ++i) {
      const double x = g.coord(i) - src_x;
      row[std::size_t(i)] =
          0.5 * (std::erf((x + 0.5 * g.dx) * inv_s) - std::erf((x - 0.5 * g.dx) * inv_s)) / g.dx;
    }
  }
  return w;
}

using AxisPack = std::array<std::vector<std::vector<double>>, 3>;  // one table per axis

inline AxisPack make_pack(double diffusion, const SpaceTimeGrid& g,
                          const std::array<double, 3>& src, double t0) {
  AxisPack p;
  for (int a = 0; a < g.dim; ++a) p[std::size_t(a)] = axis_slices(diffusion, g, src[std::size_t(a)], t0);
  return p;
}

/// sum_{j'} dt prod_a [ sum_i dx A_a[j'][i] B_a[j'][i] C_a[nt-j'][i] ],
/// the separable triple reduction behind G.
inline double triple_reduce(const SpaceTimeGrid& g, const AxisPack& A, const AxisPack& B,
                            const AxisPack& C_out) {
  double total = 0;
  for (int j = 0; j <= g.nt; ++j) {
    double prod = g.dt;
    for (int a = 0; a < g.dim && prod != 0; ++a) {
      const auto& wa = A[std::size_t(a)][std::size_t(j)];
      const auto& wb = B[std::size_t(a)][std::size_t(j)];
      const auto& wc = C_out[std::size_t(a)][std::size_t(g.nt - j)];
      if (wa.empty() || wb.empty() || wc.empty()) {
        prod = 0;
        break;
      }
      double s = 0;
      for (int i = 0; i < g.nx; ++i) s += wa[std::size_t(i)] * wb[std::size_t(i)] * wc[std::size_t(i)];
      prod *= s * g.dx;
    }
    total += prod;
  }
  return total;
}

/// Kernel-field value at spatial displacement (out - s), slice tau_idx.
/// Returns 0 when the displacement leaves the box (zero padding).
struct KernelLookup {
  const Field& kern;
  std::array<int, 3> origin{0, 0, 0};
  explicit KernelLookup(const Field& k) : kern(k) {
    for (int a = 0; a < k.grid.dim; ++a) origin[std::size_t(a)] = k.grid.node_index(0.0);
  }
  [[nodiscard]] double at(const std::array<int, 3>& out, const std::array<int, 3>& s,
                          int tau_idx) const {
    std::int64_t flat = 0;
    for (int a = kern.grid.dim - 1; a >= 0; --a) {
      const int d = out[std::size_t(a)] - s[std::size_t(a)] + origin[std::size_t(a)];
      if (d < 0 || d >= kern.grid.nx) return 0.0;
      flat = flat * kern.grid.nx + d;
    }
    return kern.at(tau_idx, flat);
  }
};

/// [kern ** (f1 .* f2)](out, T) without materializing the outer convolution.
inline double reduce_product(const Field& kern, const Field& f1, const Field& f2,
                             const std::array<int, 3>& out) {
  const SpaceTimeGrid& g = kern.grid;
  KernelLookup lk(kern);
  double cell = g.dt;
  for (int a = 0; a < g.dim; ++a) cell *= g.dx;
  double total = 0;
  for (int j = 0; j <= g.nt; ++j) {
    const double* s1 = f1.slice(j);
    const double* s2 = f2.slice(j);
    const int tau = g.nt - j;
    std::array<int, 3> idx{0, 0, 0};
    double acc = 0;
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      const double v = s1[s] * s2[s];
      if (v != 0) acc += v * lk.at(out, idx, tau);
      for (int a = 0; a < g.dim; ++a) {
        if (++idx[std::size_t(a)] < g.nx) break;
        idx[std::size_t(a)] = 0;
      }
    }
    total += acc;
  }
  return total * cell;
}

/// Same with the first factor given as an axis pack (a shifted kernel) so it
/// never has to be materialized.
inline double reduce_product_pack(const Field& kern, const AxisPack& pack, const Field& f2,
                                  const std::array<int, 3>& out) {
  const SpaceTimeGrid& g = kern.grid;
  KernelLookup lk(kern);
  double cell = g.dt;
  for (int a = 0; a < g.dim; ++a) cell *= g.dx;
  double total = 0;
  for (int j = 0; j <= g.nt; ++j) {
    if (pack[0][std::size_t(j)].empty()) continue;
    const double* s2 = f2.slice(j);
    const int tau = g.nt - j;
    std::array<int, 3> idx{0, 0, 0};
    double acc = 0;
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      double v = s2[s];
      for (int a = 0; a < g.dim && v != 0; ++a)
        v *= pack[std::size_t(a)][std::size_t(j)][std::size_t(idx[std::size_t(a)])];
      if (v != 0) acc += v * lk.at(out, idx, tau);
      for (int a = 0; a < g.dim; ++a) {
        if (++idx[std::size_t(a)] < g.nx) break;
        idx[std::size_t(a)] = 0;
      }
    }
    total += acc;
  }
  return total * cell;
}

/// Materialize the space-time field of a shifted kernel from its axis pack.
inline Field pack_field(const AxisPack& p, const SpaceTimeGrid& g, const std::string& label) {
  Field f(g, label);
  for (int j = 0; j <= g.nt; ++j) {
    if (p[0][std::size_t(j)].empty()) continue;
    double* sl = f.slice(j);
    std::array<int, 3> idx{0, 0, 0};
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      double v = 1;
      for (int a = 0; a < g.dim; ++a) v *= p[std::size_t(a)][std::size_t(j)][std::size_t(idx[std::size_t(a)])];
      sl[s] = v;
      for (int a = 0; a < g.dim; ++a) {
        if (++idx[std::size_t(a)] < g.nx) break;
        idx[std::size_t(a)] = 0;
      }
    }
  }
  return f;
}

}  // namespace detail

// ============================================================================
// Receiver response G
// ============================================================================
/// Exact grid-quadrature evaluator of G(t_i, t_j) for arbitrary release times
/// in [0, T].
class GEvaluator {
 public:
  GEvaluator(const SpeciesSystem& sys, const MacGeometry& geom, const SpaceTimeGrid& grid)
      : sys_(sys), geom_(geom), grid_(grid) {
    sys_.validate();
    if (sys.dim != grid.dim) throw GridMismatch("system/grid dimension mismatch");
    out_pack_ = detail::make_pack(sys.d_c, grid, geom.rx, 0.0);
  }

  [[nodiscard]] double operator()(double t_i, double t_j) const {
    if (t_i < 0 || t_i > grid_.t_end || t_j < 0 || t_j > grid_.t_end)
      throw TimeOutsideSlot("release time outside [0, T]");
    const auto a = detail::make_pack(sys_.d_a, grid_, {0, 0, 0}, t_i);
    const auto b = detail::make_pack(sys_.d_b, grid_, geom_.tx_b, t_j);
    return sys_.lambda * detail::triple_reduce(grid_, a, b, out_pack_);
  }

  [[nodiscard]] const SpaceTimeGrid& grid() const { return grid_; }

 private:
  SpeciesSystem sys_;
  MacGeometry geom_;
  SpaceTimeGrid grid_;
  detail::AxisPack out_pack_;
};

/// Spec-level single-entry form.
inline double response_g(const SpeciesSystem& sys, const MacGeometry& geom,
                         const SpaceTimeGrid& grid, double t_i, double t_j) {
  return GEvaluator(sys, geom, grid)(t_i, t_j);
}

/// Precomputed n x n table over an aligned time grid with bilinear
/// interpolation, the workhorse of the search loops.
class GTable {
 public:
  GTable(const GEvaluator& eval, int n_points) {
    const SpaceTimeGrid& g = eval.grid();
    if (n_points < 2 || g.nt % (n_points - 1) != 0)
      throw ValidationError("G-table needs n_points-1 dividing nt");
    n_ = n_points;
    step_ = g.t_end / double(n_points - 1);
    times_.resize(std::size_t(n_));
    for (int i = 0; i < n_; ++i) times_[std::size_t(i)] = double(i) * step_;
    val_.resize(std::size_t(n_) * std::size_t(n_));
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) val_[std::size_t(i * n_ + j)] = eval(times_[std::size_t(i)], times_[std::size_t(j)]);
  }

  [[nodiscard]] int size() const { return n_; }
  [[nodiscard]] const std::vector<double>& times() const { return times_; }
  [[nodiscard]] double at(int i, int j) const { return val_[std::size_t(i * n_ + j)]; }

  [[nodiscard]] double interp(double ti, double tj) const {
    const auto locate = [&](double t) {
      double u = std::clamp(t / step_, 0.0, double(n_ - 1));
      int k = std::min(int(u), n_ - 2);
      return std::pair<int, double>(k, u - double(k));
    };
    const auto [i, fi] = locate(ti);
    const auto [j, fj] = locate(tj);
    return at(i, j) * (1 - fi) * (1 - fj) + at(i + 1, j) * fi * (1 - fj) +
           at(i, j + 1) * (1 - fi) * fj + at(i + 1, j + 1) * fi * fj;
  }

 private:
  int n_ = 0;
  double step_ = 0;
  std::vector<double> times_;
  std::vector<double> val_;
};

// ============================================================================
// MAC designs
// ============================================================================
struct MacWave {
  std::array<double, 2> amp{0, 0};
  std::array<double, 2> time{0, 0};
};

struct MacDesign {
  MacWave a0, a1, b0, b1;
  double s_a = 0, s_b = 0;

  void validate() const {
    for (const MacWave* w : {&a0, &a1, &b0, &b1})
      for (double v : w->amp)
        if (v < 0) throw ValidationError("negative amplitude");
    const double slack = 1 + 1e-9;
    if (a0.amp[0] + a0.amp[1] > s_a * slack || a1.amp[0] + a1.amp[1] > s_a * slack)
      throw ValidationError("A budget exceeded");
    if (b0.amp[0] + b0.amp[1] > s_b * slack || b1.amp[0] + b1.amp[1] > s_b * slack)
      throw ValidationError("B budget exceeded");
  }
};

/// Bilinear response sums rho_{mn} = sum_{p,q} a_m[p] b_n[q] G(.,.).
template <class GFun>
std::array<double, 4> mac_rhos(const MacDesign& d, GFun&& g) {
  const MacWave* as[2] = {&d.a0, &d.a1};
  const MacWave* bs[2] = {&d.b0, &d.b1};
  std::array<double, 4> rho{0, 0, 0, 0};
  for (int m = 0; m < 2; ++m)
    for (int n = 0; n < 2; ++n) {
      double s = 0;
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q)
          s += as[m]->amp[std::size_t(p)] * bs[n]->amp[std::size_t(q)] *
               g(as[m]->time[std::size_t(p)], bs[n]->time[std::size_t(q)]);
      rho[std::size_t(m * 2 + n)] = s;
    }
  return rho;
}

struct MacResult {
  MacDesign design;
  std::array<double, 4> rho{0, 0, 0, 0};
  double p_e = 1;
};

struct SearchConfig {
  int n_time = 16;       // coarse time-grid points per axis (G-table size)
  int n_amp = 17;        // amplitude levels per delta in the coarse stage
  int top_k = 48;        // exact evaluations per subproblem after screening
  int max_rounds = 12;   // coordinate-descent sweeps
  double tol = 1e-4;     // relative improvement stop
  int n_time_fine = 32;  // release-time grid for single-delta searches
};

namespace detail {

inline double mac_pe(const std::array<double, 4>& rho, double volume) {
  HypothesisSet h;
  h.means = {volume * rho[0], volume * rho[1], volume * rho[2], volume * rho[3]};
  return mary_error_prob(h);
}

/// Cheap separation proxy: min over hypothesis pairs of (sqrt(mu_i) -
/// sqrt(mu_j))^2.  Larger is better; used only to shortlist candidates for
/// exact evaluation.
inline double separation_proxy(const std::array<double, 4>& rho, double volume) {
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      const double d = std::sqrt(volume * rho[std::size_t(i)]) - std::sqrt(volume * rho[std::size_t(j)]);
      worst = std::min(worst, d * d);
    }
  return worst;
}

}  // namespace detail

/// Two-delta waveform optimization: coarse grid + coordinate descent over
/// waveforms, deterministic multistart, exact error probability on the
/// returned design.  `warm_start` designs join the candidate pool (used by
/// budget sweeps to keep the best-found error monotone).
inline MacResult optimize_mac(const SpeciesSystem& sys, double s_a, double s_b,
                              const MacGeometry& geom, const SpaceTimeGrid& grid,
                              const SearchConfig& cfg = {},
                              const std::vector<MacDesign>& warm_start = {}) {
  const GEvaluator exact(sys, geom, grid);
  const GTable table(exact, cfg.n_time);
  const double volume = geom.sample_volume;
  const auto g_interp = [&](double ti, double tj) { return table.interp(ti, tj); };
  const auto g_exact = [&](double ti, double tj) { return exact(ti, tj); };

  const auto exact_pe = [&](const MacDesign& d) {
    return detail::mac_pe(mac_rhos(d, g_exact), volume);
  };

  // --- coarse candidate enumeration for one waveform, others held fixed ---
  struct Cand {
    MacWave w;
    double proxy;
  };
  const auto& times = table.times();
  std::vector<double> levels(static_cast<std::size_t>(cfg.n_amp));
  for (int l = 0; l < cfg.n_amp; ++l) levels[std::size_t(l)] = double(l) / double(cfg.n_amp - 1);

  // descend on one design; returns exact P_e
  const auto descend = [&](MacDesign d) {
    double best = detail::mac_pe(mac_rhos(d, g_interp), volume);
    for (int round = 0; round < cfg.max_rounds; ++round) {
      const double round_start = best;
      for (int which = 0; which < 4; ++which) {
        MacWave* w = which == 0 ? &d.a0 : which == 1 ? &d.a1 : which == 2 ? &d.b0 : &d.b1;
        const bool a_side = which < 2;
        const double budget = a_side ? s_a : s_b;
        // response of the fixed side at each candidate time
        const MacWave& o0 = a_side ? d.b0 : d.a0;
        const MacWave& o1 = a_side ? d.b1 : d.a1;
        std::vector<std::array<double, 2>> fixed(times.size());
        for (std::size_t k = 0; k < times.size(); ++k) {
          const auto resp = [&](const MacWave& o) {
            double s = 0;
            for (int q = 0; q < 2; ++q)
              s += o.amp[std::size_t(q)] * (a_side ? g_interp(times[k], o.time[std::size_t(q)])
                                                   : g_interp(o.time[std::size_t(q)], times[k]));
            return s;
          };
          fixed[k] = {resp(o0), resp(o1)};
        }
        // rho components not touched by this waveform
        const auto base_rho = mac_rhos(d, g_interp);
        std::vector<Cand> cands;
        cands.reserve(times.size() * times.size() * levels.size() * levels.size() / 4);
        for (std::size_t p = 0; p < times.size(); ++p)
          for (std::size_t q = p; q < times.size(); ++q)
            for (double u : levels)
              for (double v : levels) {
                if (u + v > 1.0 + 1e-12) continue;
                MacWave cand{{u * budget, v * budget}, {times[p], times[q]}};
                std::array<double, 4> rho = base_rho;
                const double r0 = cand.amp[0] * fixed[p][0] + cand.amp[1] * fixed[q][0];
                const double r1 = cand.amp[0] * fixed[p][1] + cand.amp[1] * fixed[q][1];
                if (which == 0) { rho[0] = r0; rho[1] = r1; }
                if (which == 1) { rho[2] = r0; rho[3] = r1; }
                if (which == 2) { rho[0] = r0; rho[2] = r1; }
                if (which == 3) { rho[1] = r0; rho[3] = r1; }
                // note: for b-side, fixed[.][m] pairs with message bit m of A
                cands.push_back({cand, detail::separation_proxy(rho, volume)});
              }
        std::partial_sort(cands.begin(),
                          cands.begin() + std::min<std::ptrdiff_t>(cfg.top_k, cands.size()),
                          cands.end(), [](const Cand& x, const Cand& y) { return x.proxy > y.proxy; });
        MacWave incumbent = *w;
        for (std::size_t k = 0; k < std::min<std::size_t>(std::size_t(cfg.top_k), cands.size()); ++k) {
          *w = cands[k].w;
          const double pe = detail::mac_pe(mac_rhos(d, g_interp), volume);
          if (pe < best) {
            best = pe;
            incumbent = *w;
          }
        }
        *w = incumbent;
      }
      if (round_start - best <= cfg.tol * std::max(best, 1e-300)) break;
    }
    return d;
  };

  // deterministic starts
  std::vector<MacDesign> starts = warm_start;
  {
    int mi = 0, mj = 0;
    double gmax = 0;
    for (int i = 0; i < table.size(); ++i)
      for (int j = 0; j < table.size(); ++j)
        if (table.at(i, j) > gmax) {
          gmax = table.at(i, j);
          mi = i;
          mj = j;
        }
    const double tpk_a = times[std::size_t(mi)], tpk_b = times[std::size_t(mj)];
    MacDesign s1;  // on-off keying at the response peak
    s1.s_a = s_a; s1.s_b = s_b;
    s1.a1 = {{s_a, 0}, {tpk_a, tpk_a}};
    s1.b1 = {{s_b, 0}, {tpk_b, tpk_b}};
    starts.push_back(s1);
    MacDesign s2 = s1;  // distinct low-amplitude zero-bit pulses
    s2.a0 = {{0.25 * s_a, 0}, {tpk_a, tpk_a}};
    s2.b0 = {{0.25 * s_b, 0}, {tpk_b, tpk_b}};
    starts.push_back(s2);
    MacDesign s3;  // split mass across slot start and peak
    s3.s_a = s_a; s3.s_b = s_b;
    s3.a0 = {{0.5 * s_a, 0.0}, {0.0, tpk_a}};
    s3.a1 = {{0.0, s_a}, {0.0, tpk_a}};
    s3.b0 = {{0.5 * s_b, 0.0}, {0.0, tpk_b}};
    s3.b1 = {{0.0, s_b}, {0.0, tpk_b}};
    starts.push_back(s3);
  }
  for (auto& s : starts) {
    s.s_a = s_a;
    s.s_b = s_b;
  }

  MacResult out;
  out.p_e = std::numeric_limits<double>::infinity();
  for (const auto& s0 : starts) {
    const MacDesign d = descend(s0);
    const double pe = exact_pe(d);
    if (pe < out.p_e) {
      out.p_e = pe;
      out.design = d;
    }
  }
  // warm starts compete as-is too (budget sweeps rely on this)
  for (const auto& s0 : warm_start) {
    const double pe = exact_pe(s0);
    if (pe < out.p_e) {
      out.p_e = pe;
      out.design = s0;
    }
  }
  out.design.validate();
  out.rho = mac_rhos(out.design, g_exact);
  out.p_e = detail::mac_pe(out.rho, volume);
  return out;
}

// ============================================================================
// Pulse baseline
// ============================================================================
struct PulseResult {
  double a0 = 0, a1 = 0, b0 = 0, b1 = 0;  // constant amplitudes over [0, T]
  std::array<double, 4> rho{0, 0, 0, 0};
  double p_e = 1;
  double rho_unit = 0;  // response of the unit pulse pair
};

/// Best constant-pulse quadruple by grid search (amplitudes <= budget / T).
/// The response is bilinear, so one first-order solve with unit pulses gives
/// rho for every amplitude combination.
inline PulseResult pulse_baseline(const SpeciesSystem& sys, double s_a, double s_b,
                                  const MacGeometry& geom, const SpaceTimeGrid& grid,
                                  int levels = 32) {
  if (levels < 2) throw ValidationError("need at least 2 amplitude levels");
  Waveform ua, ub;
  ua.envelope = {1.0, 1.0};
  ua.envelope_t_end = grid.t_end;
  ub.envelope = {1.0, 1.0};
  ub.envelope_t_end = grid.t_end;
  ub.envelope_location = geom.tx_b;
  SolveOptions opts;
  opts.orders = 1;
  opts.override_radius = true;
  opts.remainder = false;
  const SolveOutcome unit = solve_plain(sys, grid, ua, ub, nullptr, nullptr, opts);
  std::array<int, 3> ridx{0, 0, 0};
  for (int a = 0; a < grid.dim; ++a) ridx[std::size_t(a)] = grid.node_index(geom.rx[std::size_t(a)]);
  const double rho_unit = unit.fields.c.at(grid.nt, grid.flat(ridx));

  const double amax = s_a / grid.t_end, bmax = s_b / grid.t_end;
  const double V = geom.sample_volume;
  std::vector<double> lv(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) lv[std::size_t(l)] = double(l) / double(levels - 1);

  struct Cand {
    double a0, a1, b0, b1, proxy;
  };
  std::vector<Cand> cands;
  cands.reserve(std::size_t(levels) * std::size_t(levels) * std::size_t(levels) * std::size_t(levels) / 4);
  for (double a0 : lv)
    for (double a1 : lv) {
      if (a1 < a0) continue;  // message relabeling symmetry
      for (double b0 : lv)
        for (double b1 : lv) {
          if (b1 < b0) continue;
          const std::array<double, 4> rho = {a0 * b0 * rho_unit, a0 * b1 * rho_unit,
                                             a1 * b0 * rho_unit, a1 * b1 * rho_unit};
          cands.push_back({a0, a1, b0, b1, detail::separation_proxy(rho, V * amax * bmax)});
        }
    }
  std::partial_sort(cands.begin(), cands.begin() + std::min<std::ptrdiff_t>(256, cands.size()),
                    cands.end(), [](const Cand& x, const Cand& y) { return x.proxy > y.proxy; });

  PulseResult out;
  out.rho_unit = rho_unit;
  for (std::size_t k = 0; k < std::min<std::size_t>(256, cands.size()); ++k) {
    const auto& c = cands[k];
    const std::array<double, 4> rho = {c.a0 * c.b0 * amax * bmax * rho_unit,
                                       c.a0 * c.b1 * amax * bmax * rho_unit,
                                       c.a1 * c.b0 * amax * bmax * rho_unit,
                                       c.a1 * c.b1 * amax * bmax * rho_unit};
    const double pe = detail::mac_pe(rho, V);
    if (pe < out.p_e) {
      out.p_e = pe;
      out.a0 = c.a0 * amax;
      out.a1 = c.a1 * amax;
      out.b0 = c.b0 * bmax;
      out.b1 = c.b1 * bmax;
      out.rho = rho;
    }
  }
  return out;
}

// ============================================================================
// Amplification (Example 2)
// ============================================================================
struct AmplifyGeometry {
  std::array<double, 3> rx{0, 0, 0};  // receiver; transmitter at the origin
  double sample_volume = 1.0;
};

struct AmplifyResult {
  double t_a = 0, t_b = 0;
  double amp_a = 0, amp_b = 0;  // fixed at budget (order-one optimal)
  double rho1 = 0;              // signal mean concentration; rho0 = 0
  double p_e = 0.5;
  double log_p_e = 0;
};

/// Theorem-3 search: single deltas at full budget, only the two release
/// times optimized.  The objective is the order-2 receiver concentration
/// rho1(t_a, t_b); with rho0 = 0 the binary MAP error is exp(-V rho1)/2, so
/// maximizing rho1 is exact.
class AmplifyObjective {
 public:
  AmplifyObjective(const SpeciesSystem& sys, double s_a, double s_b, const AmplifyGeometry& geom,
                   const Waveform& noise_c, const SpaceTimeGrid& grid,
                   const std::vector<double>* init_c = nullptr)
      : sys_(sys), s_a_(s_a), s_b_(s_b), geom_(geom), grid_(grid) {
    sys_.validate();
    kern_a_ = kernel_field({grid.dim, sys.d_a}, grid);
    kern_c_ = kernel_field({grid.dim, sys.d_c}, grid);
    // C0 = phi_C ** (f_C + D_C lap I) + I
    Field f_c = discretize_waveform(noise_c, grid);
    InitialState init;
    if (init_c) init.c = *init_c;
    SeriesSolver solver(sys_, grid);
    c0_ = solver.solve_order0(Field(grid, "fa0"), Field(grid, "fb0"), &f_c,
                              init_c ? &init : nullptr)
              .c.front();
    cpow_ = c0_;
    for (int m = 1; m < sys.beta; ++m)
      for (std::size_t s = 0; s < cpow_.values.size(); ++s) cpow_.values[s] *= c0_.values[s];
    for (int a = 0; a < grid.dim; ++a) rx_idx_[std::size_t(a)] = grid.node_index(geom.rx[std::size_t(a)]);
  }

  /// rho1 at arbitrary release times (exact grid quadrature; two kernel
  /// convolutions per fresh t_a / t_b, cached).
  double rho1(double t_a, double t_b) const {
    if (t_a < 0 || t_a > grid_.t_end || t_b < 0 || t_b > grid_.t_end)
      throw TimeOutsideSlot("release time outside [0, T]");
    const APieces& ap = a_cache(t_a);
    const Field& c1b = b_cache(t_b);
    const double lam = sys_.lambda;
    double v = s_a_ * ap.k0;
    v -= lam * s_a_ * ap.u1;
    v -= lam * lam *
         (s_a_ * s_a_ * ap.r_aa + s_a_ * ap.r_ac +
          s_a_ * s_b_ * detail::reduce_product_pack(kern_a_, ap.pack, c1b, rx_idx_));
    return v;
  }

  [[nodiscard]] const SpaceTimeGrid& grid() const { return grid_; }
  [[nodiscard]] double volume() const { return geom_.sample_volume; }

 private:
  struct APieces {
    double t = -1;
    double k0 = 0;          // phi_A(rx, T - t_a)
    double u1 = 0;          // [phi_A ** (phi_A^{(ta)} C0)](rx, T)
    double r_aa = 0;        // [phi_A ** (phi_A^{(ta)} C1A)](rx, T)
    double r_ac = 0;        // [phi_A ** (A1 C0)](rx, T)
    detail::AxisPack pack;  // phi_A^{(ta)} in separable form
  };

  const APieces& a_cache(double t_a) const {
    for (const auto& p : a_cache_)
      if (p.t == t_a) return p;
    APieces p;
    p.t = t_a;
    p.pack = detail::make_pack(sys_.d_a, grid_, {0, 0, 0}, t_a);
    {
      double v = 1;
      for (int a = 0; a < grid_.dim; ++a) {
        const auto& row = p.pack[std::size_t(a)][std::size_t(grid_.nt)];
        v *= row.empty() ? 0.0 : row[std::size_t(rx_idx_[std::size_t(a)])];
      }
      p.k0 = v;
    }
    Field prod = detail::pack_field(p.pack, grid_, "phiA_shift");
    for (std::size_t s = 0; s < prod.values.size(); ++s) prod.values[s] *= c0_.values[s];
    p.u1 = detail::reduce_product_pack(kern_a_, p.pack, c0_, rx_idx_);
    Field c1a = conv_space_time(kern_c_, prod);
    for (auto& v : c1a.values) v = -v;
    p.r_aa = detail::reduce_product_pack(kern_a_, p.pack, c1a, rx_idx_);
    c1a = Field();  // release before the next conv
    Field a1 = conv_space_time(kern_a_, prod);
    for (auto& v : a1.values) v = -v;
    p.r_ac = detail::reduce_product(kern_a_, a1, c0_, rx_idx_);
    a_cache_.push_back(std::move(p));
    return a_cache_.back();
  }

  const Field& b_cache(double t_b) const {
    for (const auto& p : b_cache_)
      if (p.first == t_b) return p.second;
    const auto pack = detail::make_pack(sys_.d_b, grid_, {0, 0, 0}, t_b);
    Field prod = detail::pack_field(pack, grid_, "phiB_shift");
    for (std::size_t s = 0; s < prod.values.size(); ++s) prod.values[s] *= cpow_.values[s];
    Field c1b = conv_space_time(kern_c_, prod);
    for (auto& v : c1b.values) v = -sys_.gamma * v;
    if (b_cache_.size() >= 24) b_cache_.erase(b_cache_.begin());
    b_cache_.emplace_back(t_b, std::move(c1b));
    return b_cache_.back().second;
  }

  SpeciesSystem sys_;
  double s_a_, s_b_;
  AmplifyGeometry geom_;
  SpaceTimeGrid grid_;
  Field kern_a_, kern_c_, c0_, cpow_;
  std::array<int, 3> rx_idx_{0, 0, 0};
  mutable std::vector<APieces> a_cache_;
  mutable std::vector<std::pair<double, Field>> b_cache_;
};

inline AmplifyResult optimize_amplify(const SpeciesSystem& sys, double s_a, double s_b,
                                      const AmplifyGeometry& geom, const Waveform& noise_c,
                                      const SpaceTimeGrid& grid, const SearchConfig& cfg = {},
                                      const std::vector<double>* init_c = nullptr) {
  AmplifyObjective obj(sys, s_a, s_b, geom, noise_c, grid, init_c);
  const int na = cfg.n_time_fine, nb = cfg.n_time;
  if (na < 2 || nb < 2) throw ValidationError("need at least 2 release-time candidates");

  double best = -std::numeric_limits<double>::infinity();
  double ta = 0, tb = 0;
  for (int ib = 0; ib < nb; ++ib) {
    const double cand_tb = grid.t_end * double(ib) / double(nb - 1);
    for (int ia = 0; ia < na; ++ia) {
      const double cand_ta = grid.t_end * double(ia) / double(na - 1);
      const double v = obj.rho1(cand_ta, cand_tb);
      if (v > best) {
        best = v;
        ta = cand_ta;
        tb = cand_tb;
      }
    }
  }

  // parabolic refinement, coordinate-wise, exact evaluations
  const double step_a = grid.t_end / double(na - 1);
  const double step_b = grid.t_end / double(nb - 1);
  for (int round = 0; round < 3; ++round) {
    const double before = best;
    for (int axis = 0; axis < 2; ++axis) {
      const double step = (axis == 0 ? step_a : step_b) / double(1 << round);
      double& t = axis == 0 ? ta : tb;
      const double lo = std::max(0.0, t - step), hi = std::min(grid.t_end, t + step);
      for (double cand : {lo, 0.5 * (lo + t), 0.5 * (t + hi), hi}) {
        const double v = axis == 0 ? obj.rho1(cand, tb) : obj.rho1(ta, cand);
        if (v > best) {
          best = v;
          t = cand;
        }
      }
    }
    if (best - before <= cfg.tol * std::abs(best)) break;
  }

  AmplifyResult out;
  out.t_a = ta;
  out.t_b = tb;
  out.amp_a = s_a;
  out.amp_b = s_b;
  out.rho1 = best;
  const double mean = obj.volume() * std::max(0.0, best);
  out.p_e = binary_error_prob(0.0, mean);
  out.log_p_e = log_binary_error_prob_zero_null(mean);
  return out;
}

// ============================================================================
// Two-way (Example 3)
// ============================================================================
struct TwoWayGeometry {
  std::array<double, 3> tx_b{0, 0, 0};  // transceiver B; A at the origin
  double sample_volume = 1.0;
};

struct TwoWayDesign {
  double amp_a = 0, amp_b = 0;
  double t_a = 0, t_b = 0;
};

struct TwoWayResult {
  TwoWayDesign design;
  std::array<double, 4> j_prob{0.5, 0.5, 0.5, 0.5};
  std::array<double, 4> log_j{0, 0, 0, 0};
  double h_cost = 0;
  double zeta1_a = 0, zeta2_a = 0, zeta1_b = 0, zeta2_b = 0;
};

/// First-order two-way signal model: zeta1 per link minus the destructive
/// cross term zeta2 = lambda a b G.  With zero-bit waveforms identically
/// zero (Theorem 4), every conditional pair is (0, V zeta), so J =
/// exp(-V zeta)/2 exactly and the weighted-log cost is linear in the zetas.
class TwoWayObjective {
 public:
  TwoWayObjective(const SpeciesSystem& sys, const TwoWayGeometry& geom, const SpaceTimeGrid& grid)
      : sys_(sys), geom_(geom), grid_(grid) {
    sys_.validate();
    if (sys.scenario != Scenario::TWO_WAY_AB) throw ValidationError("two-way scenario required");
    packs_a_out_ = detail::make_pack(sys.d_a, grid, geom.tx_b, 0.0);
    packs_b_out_ = detail::make_pack(sys.d_b, grid, {0, 0, 0}, 0.0);
  }

  [[nodiscard]] double kernel_a(double t_a) const {  // phi_A(d_B, T - t_a)
    return point_response(sys_.d_a, {0, 0, 0}, geom_.tx_b, t_a);
  }
  [[nodiscard]] double kernel_b(double t_b) const {  // phi_B(-d_B, T - t_b)
    return point_response(sys_.d_b, geom_.tx_b, {0, 0, 0}, t_b);
  }
  /// G per unit amplitudes: the cross-response seen at d_B (A link) and at
  /// the origin (B link).
  [[nodiscard]] std::pair<double, double> cross(double t_a, double t_b) const {
    const auto pa = detail::make_pack(sys_.d_a, grid_, {0, 0, 0}, t_a);
    const auto pb = detail::make_pack(sys_.d_b, grid_, geom_.tx_b, t_b);
    const double ga = detail::triple_reduce(grid_, pa, pb, packs_a_out_);
    const double gb = detail::triple_reduce(grid_, pa, pb, packs_b_out_);
    return {ga, gb};
  }

  [[nodiscard]] const SpaceTimeGrid& grid() const { return grid_; }
  [[nodiscard]] const SpeciesSystem& system() const { return sys_; }

 private:
  [[nodiscard]] double point_response(double diffusion, const std::array<double, 3>& src,
                                      const std::array<double, 3>& dst, double t0) const {
    const double tau = grid_.t_end - t0;
    if (tau < 0) return 0;
    const auto pack = detail::make_pack(diffusion, grid_, src, t0);
    double v = 1;
    for (int a = 0; a < grid_.dim; ++a) {
      const auto& row = pack[std::size_t(a)][std::size_t(grid_.nt)];
      v *= row.empty() ? 0.0 : row[std::size_t(grid_.node_index(dst[std::size_t(a)]))];
    }
    return v;
  }

  SpeciesSystem sys_;
  TwoWayGeometry geom_;
  SpaceTimeGrid grid_;
  detail::AxisPack packs_a_out_, packs_b_out_;
};

inline TwoWayResult evaluate_twoway(const TwoWayObjective& obj, const TwoWayDesign& d,
                                    const std::array<double, 4>& omega, double volume) {
  const double lam = obj.system().lambda;
  const auto [ga, gb] = obj.cross(d.t_a, d.t_b);
  TwoWayResult r;
  r.design = d;
  r.zeta1_a = d.amp_a * obj.kernel_a(d.t_a);
  r.zeta1_b = d.amp_b * obj.kernel_b(d.t_b);
  r.zeta2_a = lam * d.amp_a * d.amp_b * ga;
  r.zeta2_b = lam * d.amp_a * d.amp_b * gb;
  const double means[4] = {volume * std::max(0.0, r.zeta1_a),
                           volume * std::max(0.0, r.zeta1_a - r.zeta2_a),
                           volume * std::max(0.0, r.zeta1_b),
                           volume * std::max(0.0, r.zeta1_b - r.zeta2_b)};
  r.h_cost = 0;
  for (int i = 0; i < 4; ++i) {
    r.log_j[std::size_t(i)] = log_binary_error_prob_zero_null(means[i]);
    r.j_prob[std::size_t(i)] = binary_error_prob(0.0, means[i]);
    r.h_cost += omega[std::size_t(i)] * r.log_j[std::size_t(i)];
  }
  return r;
}

inline TwoWayResult optimize_twoway(const SpeciesSystem& sys, double s_a, double s_b,
                                    const TwoWayGeometry& geom,
                                    const std::array<double, 4>& omega,
                                    const SpaceTimeGrid& grid, const SearchConfig& cfg = {}) {
  for (double w : omega)
    if (w < 0) throw ValidationError("omega weights must be nonnegative");
  TwoWayObjective obj(sys, geom, grid);
  const int n = cfg.n_time;
  if (grid.nt % (n - 1) != 0) throw ValidationError("search grid must align with the time grid");

  TwoWayResult best;
  best.h_cost = std::numeric_limits<double>::infinity();
  // H is bilinear in the amplitudes, so only box vertices can be optimal.
  const double amps_a[2] = {0.0, s_a}, amps_b[2] = {0.0, s_b};
  for (int ia = 0; ia < n; ++ia)
    for (int ib = 0; ib < n; ++ib)
      for (double aa : amps_a)
        for (double bb : amps_b) {
          TwoWayDesign d{aa, bb, grid.t_end * double(ia) / double(n - 1),
                         grid.t_end * double(ib) / double(n - 1)};
          const TwoWayResult r = evaluate_twoway(obj, d, omega, geom.sample_volume);
          if (r.h_cost < best.h_cost) best = r;
        }

  // coordinate refinement of the release times
  double step = grid.t_end / double(n - 1);
  for (int round = 0; round < 3; ++round, step *= 0.5) {
    for (int axis = 0; axis < 2; ++axis) {
      TwoWayDesign d = best.design;
      double& t = axis == 0 ? d.t_a : d.t_b;
      const double center = t;
      for (double cand : {center - 0.5 * step, center + 0.5 * step}) {
        if (cand < 0 || cand > grid.t_end) continue;
        t = cand;
        const TwoWayResult r = evaluate_twoway(obj, d, omega, geom.sample_volume);
        if (r.h_cost < best.h_cost) best = r;
      }
    }
  }
  return best;
}

// ============================================================================
// Design records
// ============================================================================
/// Flat key-value text record consumed by the CLI report generator.
inline void write_design_record(const std::vector<std::pair<std::string, double>>& kv,
                                const std::string& path) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    detail::print_num(out, v);
    out += '\n';
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  os << out;
}

}  // namespace rdmc
