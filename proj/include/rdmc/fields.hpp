// ============================================================================
// fields.hpp -- space-time grids, concentration fields and release waveforms
//
// The spatial domain is a box [-extent, extent)^dim truncated from the
// unbounded medium; nodes sit at x_i = -extent + i*dx with dx = 2*extent/nx,
// so the origin is a node whenever nx is even.  Time levels are t_j = j*dt,
// j = 0..nt, with dt = t_end/nt.  Everything outside the box is implicitly
// zero (absorbing-at-infinity truncation); callers are expected to size the
// box by the 6-sigma rule so that truncation error stays below 1e-6 of peak.
// ============================================================================
#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"

namespace rdmc {

// ============================================================================
// SpaceTimeGrid
// ============================================================================
struct SpaceTimeGrid {
  int dim = 1;         // spatial dimension, 1..3
  double extent = 0;   // half-width of the box per axis [m]
  int nx = 0;          // nodes per axis
  double t_end = 0;    // time horizon T [s]
  int nt = 0;          // time steps; nt+1 stored levels
  double dx = 0;
  double dt = 0;

  [[nodiscard]] std::int64_t n_space() const {
    std::int64_t n = 1;
    for (int a = 0; a < dim; ++a) n *= nx;
    return n;
  }
  [[nodiscard]] std::int64_t n_values() const { return (std::int64_t(nt) + 1) * n_space(); }

  [[nodiscard]] double coord(int i) const { return -extent + i * dx; }
  [[nodiscard]] double time(int j) const { return j * dt; }

  /// Nearest node index along one axis; throws if the point is outside the box.
  [[nodiscard]] int node_index(double x) const {
    const int i = int(std::lround((x + extent) / dx));
    if (i < 0 || i >= nx) throw LocationOutsideGrid("point " + std::to_string(x) + " outside grid");
    return i;
  }
  /// Nearest time level index; throws if outside [0, t_end].
  [[nodiscard]] int time_index(double t) const {
    const int j = int(std::lround(t / dt));
    if (j < 0 || j > nt) throw LocationOutsideGrid("time " + std::to_string(t) + " outside horizon");
    return j;
  }

  /// Flatten per-axis node indices (only the first `dim` entries used).
  [[nodiscard]] std::int64_t flat(const std::array<int, 3>& idx) const {
    std::int64_t f = 0;
    for (int a = dim - 1; a >= 0; --a) f = f * nx + idx[a];
    return f;
  }

  bool operator==(const SpaceTimeGrid& o) const {
    return dim == o.dim && extent == o.extent && nx == o.nx && t_end == o.t_end && nt == o.nt;
  }
};

/// Build a uniform grid. extent and t_end must be positive, nx and nt >= 2.
inline SpaceTimeGrid make_grid(int dim, double extent, int nx, double t_end, int nt) {
  if (dim < 1 || dim > 3) throw TooFewSamples("dim must be 1, 2 or 3");
  if (!(extent > 0) || !(t_end > 0)) throw NonPositiveExtent("extent and t_end must be positive");
  if (nx < 2 || nt < 2) throw TooFewSamples("need nx >= 2 and nt >= 2");
  SpaceTimeGrid g;
  g.dim = dim;
  g.extent = extent;
  g.nx = nx;
  g.t_end = t_end;
  g.nt = nt;
  g.dx = 2.0 * extent / nx;
  g.dt = t_end / nt;
  return g;
}

// ============================================================================
// SpeciesSystem
// ============================================================================
enum class Scenario { MAC_ABC, AMPLIFY_ABC, TWO_WAY_AB };

/// Diffusion constants and reaction rates of one reaction-diffusion system.
/// gamma is the rate ratio lambda_2/lambda_1; its units follow the scenario
/// convention of the configuration that produced it.
struct SpeciesSystem {
  int dim = 1;
  double d_a = 0, d_b = 0, d_c = 0;  // diffusion coefficients [m^2/s]
  double lambda = 0;                 // forward rate
  double gamma = 0;                  // backward/secondary rate ratio
  int beta = 1;                      // stoichiometry of C in B + beta*C (AMPLIFY only)
  Scenario scenario = Scenario::MAC_ABC;

  void validate() const {
    if (!(d_a > 0) || !(d_b > 0)) throw ValidationError("diffusion coefficients must be positive");
    if (scenario != Scenario::TWO_WAY_AB && !(d_c > 0))
      throw ValidationError("d_c must be positive for scenarios with species C");
    if (lambda < 0 || gamma < 0) throw ValidationError("rates must be nonnegative");
    if (beta < 1) throw ValidationError("beta must be a positive integer");
  }
  [[nodiscard]] double d_max() const {
    return std::max(d_a, std::max(d_b, scenario == Scenario::TWO_WAY_AB ? 0.0 : d_c));
  }
  [[nodiscard]] int n_species() const { return scenario == Scenario::TWO_WAY_AB ? 2 : 3; }
};

// ============================================================================
// Field
// ============================================================================
/// A sampled space-time function for one species, time-major storage.
struct Field {
  SpaceTimeGrid grid;
  std::string species;
  std::vector<double> values;  // (nt+1) * nx^dim

  Field() = default;
  Field(const SpaceTimeGrid& g, std::string label)
      : grid(g), species(std::move(label)), values(g.n_values(), 0.0) {}

  double& at(int j, std::int64_t s) { return values[std::int64_t(j) * grid.n_space() + s]; }
  [[nodiscard]] double at(int j, std::int64_t s) const {
    return values[std::int64_t(j) * grid.n_space() + s];
  }
  double* slice(int j) { return values.data() + std::int64_t(j) * grid.n_space(); }
  [[nodiscard]] const double* slice(int j) const {
    return values.data() + std::int64_t(j) * grid.n_space();
  }

  [[nodiscard]] double max_abs() const {
    double m = 0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  [[nodiscard]] double min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : values) m = std::min(m, v);
    return m;
  }
  [[nodiscard]] bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Discrete space-time integral, cell volume dx^dim * dt.
  [[nodiscard]] double integral() const {
    double s = 0;
    for (double v : values) s += v;
    double cell = grid.dt;
    for (int a = 0; a < grid.dim; ++a) cell *= grid.dx;
    return s * cell;
  }

  void require_same_grid(const Field& o) const {
    if (!(grid == o.grid)) throw GridMismatch("fields live on different grids");
  }
};

/// Solver-output sanity check: finite everywhere, and no negative value beyond
/// the truncation-overshoot tolerance 1e-6 * max|values|.  Returns the number
/// of flagged (small negative) cells.
inline std::int64_t validate_concentration(const Field& f) {
  if (!f.all_finite()) throw NonFiniteField("field '" + f.species + "' contains NaN/Inf");
  const double tol = 1e-6 * f.max_abs();
  std::int64_t flagged = 0;
  for (double v : f.values) {
    if (v < -tol)
      throw NegativeConcentration("field '" + f.species + "' has value " + std::to_string(v) +
                                  " below -" + std::to_string(tol));
    if (v < 0) ++flagged;
  }
  return flagged;
}

// ============================================================================
// Waveform
// ============================================================================
struct DeltaRelease {
  double time = 0;                          // release instant in [0, T]
  double weight = 0;                        // mass [molecules * m^-dim]
  std::array<double, 3> location{0, 0, 0};  // release point
};

/// A transmitter release signal: a sum of Dirac deltas plus an optional
/// sampled continuous envelope at a fixed location.  Envelope samples are
/// uniform over [0, t_end] and interpolated linearly in between.
struct Waveform {
  std::vector<DeltaRelease> deltas;
  std::vector<double> envelope;                      // empty = no envelope
  double envelope_t_end = 0;                         // sampling horizon of `envelope`
  std::array<double, 3> envelope_location{0, 0, 0};  // fixed release point
  bool envelope_everywhere = false;                  // uniform-in-space source (test signals)
  double mass_budget = std::numeric_limits<double>::infinity();

  [[nodiscard]] bool empty() const { return deltas.empty() && envelope.empty(); }

  [[nodiscard]] double envelope_value(double t) const {
    if (envelope.empty()) return 0.0;
    if (envelope.size() == 1) return envelope[0];
    const double h = envelope_t_end / double(envelope.size() - 1);
    double u = t / h;
    if (u <= 0) return envelope.front();
    if (u >= double(envelope.size() - 1)) return envelope.back();
    const auto k = std::size_t(u);
    const double w = u - double(k);
    return envelope[k] * (1.0 - w) + envelope[k + 1] * w;
  }

  /// Exact integral of the piecewise-linear envelope over [a, b].
  [[nodiscard]] double envelope_integral(double a, double b) const {
    if (envelope.empty() || b <= a) return 0.0;
    a = std::max(a, 0.0);
    b = std::min(b, envelope_t_end);
    if (b <= a) return 0.0;
    if (envelope.size() == 1) return envelope[0] * (b - a);
    const double h = envelope_t_end / double(envelope.size() - 1);
    double s = 0;
    const int ka = int(a / h), kb = int(std::min(b / h, double(envelope.size() - 2)));
    for (int k = ka; k <= kb; ++k) {
      const double lo = std::max(a, k * h), hi = std::min(b, (k + 1) * h);
      if (hi <= lo) continue;
      // trapezoid on the linear segment
      const double vlo = envelope_value(lo), vhi = envelope_value(hi);
      s += 0.5 * (vlo + vhi) * (hi - lo);
    }
    return s;
  }

  [[nodiscard]] double total_mass() const {
    double m = 0;
    for (const auto& d : deltas) m += d.weight;
    return m + envelope_integral(0, envelope_t_end);
  }

  void validate(double t_end) const {
    for (const auto& d : deltas) {
      if (d.weight < 0) throw ValidationError("delta weight must be nonnegative");
      if (d.time < 0 || d.time > t_end) throw ValidationError("delta time outside [0, T]");
    }
    for (double v : envelope)
      if (v < 0) throw ValidationError("envelope must be nonnegative");
    const double m = total_mass();
    if (m > mass_budget * (1 + 1e-9))
      throw ValidationError("waveform mass " + std::to_string(m) + " exceeds budget " +
                            std::to_string(mass_budget));
  }
};

/// Bookkeeping for off-grid releases snapped to the nearest cell.
struct SnapReport {
  int snapped = 0;
  double max_time_snap = 0;   // [s]
  double max_space_snap = 0;  // [m]
};

/// Render a waveform onto a grid.  Deltas become single-cell point masses
/// (value = weight / (dx^dim * dt)); the envelope mass released during
/// (t_{j-1}, t_j] is attributed to slice j, so the discrete space-time
/// integral of the result equals the waveform's total mass exactly.
inline Field discretize_waveform(const Waveform& w, const SpaceTimeGrid& g,
                                 SnapReport* report = nullptr) {
  Field f(g, "source");
  double cell = g.dt;
  for (int a = 0; a < g.dim; ++a) cell *= g.dx;

  auto snap_space = [&](const std::array<double, 3>& loc) {
    std::array<int, 3> idx{0, 0, 0};
    double worst = 0;
    for (int a = 0; a < g.dim; ++a) {
      idx[a] = g.node_index(loc[a]);
      worst = std::max(worst, std::abs(g.coord(idx[a]) - loc[a]));
    }
    if (report && worst > 0) {
      ++report->snapped;
      report->max_space_snap = std::max(report->max_space_snap, worst);
    }
    return idx;
  };

  for (const auto& d : w.deltas) {
    const int j = g.time_index(d.time);
    if (report) {
      const double ts = std::abs(g.time(j) - d.time);
      if (ts > 0) {
        ++report->snapped;
        report->max_time_snap = std::max(report->max_time_snap, ts);
      }
    }
    f.at(j, g.flat(snap_space(d.location))) += d.weight / cell;
  }

  if (!w.envelope.empty()) {
    const std::int64_t s0 =
        w.envelope_everywhere ? -1 : g.flat(snap_space(w.envelope_location));
    for (int j = 1; j <= g.nt; ++j) {
      const double mass = w.envelope_integral(g.time(j - 1), g.time(j));
      if (mass == 0) continue;
      if (s0 >= 0) {
        f.at(j, s0) += mass / cell;
      } else {
        // uniform in space: mass is per unit volume already
        const double v = mass / g.dt;
        double* sl = f.slice(j);
        for (std::int64_t s = 0; s < g.n_space(); ++s) sl[s] += v;
      }
    }
  }
  return f;
}

// ============================================================================
// Serialization
// ============================================================================
namespace detail {
inline void print_num(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}
}  // namespace detail

/// CSV dump, columns t,x[,y,z],value.
inline void write_field_csv(const Field& f, const std::string& path) {
  std::string out = "t,x";
  if (f.grid.dim >= 2) out += ",y";
  if (f.grid.dim >= 3) out += ",z";
  out += ",value\n";
  std::array<int, 3> idx{0, 0, 0};
  for (int j = 0; j <= f.grid.nt; ++j) {
    idx = {0, 0, 0};
    for (std::int64_t s = 0; s < f.grid.n_space(); ++s) {
      detail::print_num(out, f.grid.time(j));
      for (int a = 0; a < f.grid.dim; ++a) {
        out += ',';
        detail::print_num(out, f.grid.coord(idx[a]));
      }
      out += ',';
      detail::print_num(out, f.at(j, s));
      out += '\n';
      for (int a = 0; a < f.grid.dim; ++a) {  // odometer over axes, x fastest
        if (++idx[a] < f.grid.nx) break;
        idx[a] = 0;
      }
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  os << out;
}

/// Binary layout: header (dim, nx, nt as int64; dx, dt as doubles), then
/// row-major doubles.
inline void write_field_binary(const Field& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  const std::int64_t hdr[3] = {f.grid.dim, f.grid.nx, f.grid.nt};
  os.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  const double spg[2] = {f.grid.dx, f.grid.dt};
  os.write(reinterpret_cast<const char*>(spg), sizeof spg);
  os.write(reinterpret_cast<const char*>(f.values.data()),
           std::streamsize(f.values.size() * sizeof(double)));
}

inline Field read_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::int64_t hdr[3];
  double spg[2];
  is.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  is.read(reinterpret_cast<char*>(spg), sizeof spg);
  if (!is) throw Error("truncated field file " + path);
  SpaceTimeGrid g = make_grid(int(hdr[0]), spg[0] * double(hdr[1]) / 2.0, int(hdr[1]),
                              spg[1] * double(hdr[2]), int(hdr[2]));
  Field f(g, "loaded");
  is.read(reinterpret_cast<char*>(f.values.data()),
          std::streamsize(f.values.size() * sizeof(double)));
  if (!is) throw Error("truncated field file " + path);
  return f;
}

}  // namespace rdmc
