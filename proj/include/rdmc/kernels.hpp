// ============================================================================
// kernels.hpp -- heat-equation Green's functions and the two convolution
// primitives: space-time convolution (**) and index convolution (*^d)
//
// The discrete ** is the causal rectangle sum
//
//   (u ** v)[j, m] = sum_{j'=0..j} dt * sum_{m'} dx^dim u[j',m'] v[j-j', m-m']
//
// evaluated exactly (zero padding outside the box) by zero-padded FFTs.
// Two algebraically identical backends exist: a full (d+1)-dimensional FFT
// for small problems and a per-slice spatial FFT with direct causal
// accumulation in time for large 3-D grids, where padding the time axis
// would not fit in memory.
//
// The kernel's t=0 slice is the discrete delta (1/dx^dim at the origin cell)
// so that ** keeps its identity element on the grid; slices at t>0 are
// cell-averaged Gaussians (per-axis erf differences), which conserve unit
// mass at every time level even when the Gaussian is narrower than a cell.
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "fields.hpp"
#include "fft.hpp"

namespace rdmc {

// ============================================================================
// HeatKernel
// ============================================================================
struct HeatKernel {
  int dim = 1;
  double diffusion = 0;  // D [m^2/s]
};

/// Closed-form impulse response (4 pi D t)^(-dim/2) exp(-|x|^2 / (4 D t)).
/// Returns 0 for t <= 0 (causality).
inline double eval_kernel(const HeatKernel& k, const std::array<double, 3>& x, double t) {
  if (t <= 0) return 0.0;
  double r2 = 0;
  for (int a = 0; a < k.dim; ++a) r2 += x[a] * x[a];
  const double s = 4.0 * k.diffusion * t;
  return std::pow(M_PI * s, -0.5 * k.dim) * std::exp(-r2 / s);
}

namespace detail {

/// Per-axis cell averages of the 1-D Gaussian at one time level.
inline void kernel_axis_weights(double diffusion, double t, const SpaceTimeGrid& g,
                                std::vector<double>& w) {
  w.resize(std::size_t(g.nx));
  const double inv_s = 1.0 / std::sqrt(4.0 * diffusion * t);
  const double inv_dx = 1.0 / g.dx;
  for (int i = 0; i < g.nx; ++i) {
    const double x = g.coord(i);
    w[std::size_t(i)] =
        0.5 * (std::erf((x + 0.5 * g.dx) * inv_s) - std::erf((x - 0.5 * g.dx) * inv_s)) * inv_dx;
  }
}

}  // namespace detail

/// Render a kernel as a Field on `g`: slice 0 is the discrete delta, slices
/// j >= 1 hold the cell-averaged Gaussian at t_j (separable across axes).
inline Field kernel_field(const HeatKernel& k, const SpaceTimeGrid& g) {
  if (k.dim != g.dim) throw GridMismatch("kernel/grid dimension mismatch");
  if (!(k.diffusion > 0)) throw ValidationError("diffusion must be positive");
  Field f(g, "kernel");
  // t = 0: identity element of ** on the grid
  std::array<int, 3> origin{0, 0, 0};
  for (int a = 0; a < g.dim; ++a) origin[a] = g.node_index(0.0);
  double inv_cell = 1.0;
  for (int a = 0; a < g.dim; ++a) inv_cell /= g.dx;
  f.at(0, g.flat(origin)) = inv_cell;

  std::vector<double> w;
  for (int j = 1; j <= g.nt; ++j) {
    detail::kernel_axis_weights(k.diffusion, g.time(j), g, w);
    double* sl = f.slice(j);
    if (g.dim == 1) {
      std::copy(w.begin(), w.end(), sl);
    } else if (g.dim == 2) {
      std::int64_t s = 0;
      for (int iy = 0; iy < g.nx; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) sl[s++] = w[std::size_t(iy)] * w[std::size_t(ix)];
    } else {
      std::int64_t s = 0;
      for (int iz = 0; iz < g.nx; ++iz)
        for (int iy = 0; iy < g.nx; ++iy) {
          const double wzy = w[std::size_t(iz)] * w[std::size_t(iy)];
          for (int ix = 0; ix < g.nx; ++ix) sl[s++] = wzy * w[std::size_t(ix)];
        }
    }
  }
  return f;
}

// ============================================================================
// Space-time convolution
// ============================================================================
namespace detail {

enum class ConvBackend { AUTO, FULL_FFT, SLICE_FFT };

/// Padded-buffer budget (# of real scalars) above which the slice backend
/// takes over.  Overridable for tests.
inline std::int64_t& conv_full_fft_budget() {
  static std::int64_t budget = 40'000'000;
  return budget;
}

inline bool field_is_zero(const Field& f) {
  for (double v : f.values)
    if (v != 0.0) return false;
  return true;
}

inline Field conv_full_fft(const Field& u, const Field& v) {
  const SpaceTimeGrid& g = u.grid;
  std::vector<int> shape;
  shape.push_back(fft::next_fast_size(2 * (g.nt + 1)));
  for (int a = 0; a < g.dim; ++a) shape.push_back(fft::next_fast_size(2 * g.nx));
  fft::RealFft plan(shape);

  const std::int64_t nr = plan.n_real(), nc = plan.n_complex();
  std::vector<double> pad(static_cast<std::size_t>(nr), 0.0);
  std::vector<std::complex<double>> su(static_cast<std::size_t>(nc)), sv(static_cast<std::size_t>(nc));

  // padded spatial strides (row-major, x fastest)
  std::int64_t sp_stride[3] = {1, 1, 1};
  {
    std::int64_t acc = 1;
    for (int a = 0; a < g.dim; ++a) {
      sp_stride[a] = acc;
      acc *= shape[std::size_t(g.dim - a)];
    }
  }
  const std::int64_t t_stride = nr / shape[0];

  auto scatter = [&](const Field& f) {
    std::fill(pad.begin(), pad.end(), 0.0);
    for (int j = 0; j <= g.nt; ++j) {
      const double* sl = f.slice(j);
      std::array<int, 3> idx{0, 0, 0};
      for (std::int64_t s = 0; s < g.n_space(); ++s) {
        std::int64_t p = j * t_stride;
        for (int a = 0; a < g.dim; ++a) p += idx[a] * sp_stride[a];
        pad[std::size_t(p)] = sl[s];
        for (int a = 0; a < g.dim; ++a) {
          if (++idx[a] < g.nx) break;
          idx[a] = 0;
        }
      }
    }
  };

  scatter(u);
  plan.forward(pad.data(), su.data());
  scatter(v);
  plan.forward(pad.data(), sv.data());

  double cell = g.dt;
  for (int a = 0; a < g.dim; ++a) cell *= g.dx;
  const double scale = cell / double(nr);
  for (std::int64_t i = 0; i < nc; ++i) su[std::size_t(i)] *= sv[std::size_t(i)] * scale;
  plan.inverse(su.data(), pad.data());

  // physical node m maps to padded index m + nx/2 along each spatial axis
  Field out(g, u.species);
  const int off = g.nx / 2;
  for (int j = 0; j <= g.nt; ++j) {
    double* sl = out.slice(j);
    std::array<int, 3> idx{0, 0, 0};
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      std::int64_t p = j * t_stride;
      for (int a = 0; a < g.dim; ++a) p += (idx[a] + off) * sp_stride[a];
      sl[s] = pad[std::size_t(p)];
      for (int a = 0; a < g.dim; ++a) {
        if (++idx[a] < g.nx) break;
        idx[a] = 0;
      }
    }
  }
  return out;
}

inline Field conv_slice_fft(const Field& u, const Field& v) {
  const SpaceTimeGrid& g = u.grid;
  std::vector<int> shape;
  for (int a = 0; a < g.dim; ++a) shape.push_back(fft::next_fast_size(2 * g.nx));
  fft::RealFft plan(shape);
  const std::int64_t nr = plan.n_real(), nc = plan.n_complex();

  std::int64_t sp_stride[3] = {1, 1, 1};
  {
    std::int64_t acc = 1;
    for (int a = 0; a < g.dim; ++a) {
      sp_stride[a] = acc;
      acc *= shape[std::size_t(g.dim - 1 - a)];
    }
  }

  std::vector<double> pad(static_cast<std::size_t>(nr));
  auto scatter_slice = [&](const double* sl) {
    std::fill(pad.begin(), pad.end(), 0.0);
    std::array<int, 3> idx{0, 0, 0};
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      std::int64_t p = 0;
      for (int a = 0; a < g.dim; ++a) p += idx[a] * sp_stride[a];
      pad[std::size_t(p)] = sl[s];
      for (int a = 0; a < g.dim; ++a) {
        if (++idx[a] < g.nx) break;
        idx[a] = 0;
      }
    }
  };

  const auto nsl = std::size_t(g.nt) + 1;
  std::vector<std::vector<std::complex<double>>> su(nsl), sv(nsl);
  for (int j = 0; j <= g.nt; ++j) {
    su[std::size_t(j)].resize(std::size_t(nc));
    scatter_slice(u.slice(j));
    plan.forward(pad.data(), su[std::size_t(j)].data());
    sv[std::size_t(j)].resize(std::size_t(nc));
    scatter_slice(v.slice(j));
    plan.forward(pad.data(), sv[std::size_t(j)].data());
  }

  double cell = g.dt;
  for (int a = 0; a < g.dim; ++a) cell *= g.dx;
  const double scale = cell / double(nr);

  Field out(g, u.species);
  std::vector<std::complex<double>> acc(static_cast<std::size_t>(nc));
  const int off = g.nx / 2;
  for (int j = 0; j <= g.nt; ++j) {
    std::fill(acc.begin(), acc.end(), std::complex<double>(0, 0));
    for (int jp = 0; jp <= j; ++jp) {
      const auto& a = su[std::size_t(jp)];
      const auto& b = sv[std::size_t(j - jp)];
      for (std::int64_t i = 0; i < nc; ++i) acc[std::size_t(i)] += a[std::size_t(i)] * b[std::size_t(i)];
    }
    for (std::int64_t i = 0; i < nc; ++i) acc[std::size_t(i)] *= scale;
    plan.inverse(acc.data(), pad.data());
    double* sl = out.slice(j);
    std::array<int, 3> idx{0, 0, 0};
    for (std::int64_t s = 0; s < g.n_space(); ++s) {
      std::int64_t p = 0;
      for (int a = 0; a < g.dim; ++a) p += (idx[a] + off) * sp_stride[a];
      sl[s] = pad[std::size_t(p)];
      for (int a = 0; a < g.dim; ++a) {
        if (++idx[a] < g.nx) break;
        idx[a] = 0;
      }
    }
  }
  return out;
}

}  // namespace detail

/// (u ** v): causal space-time convolution of two fields on one grid, with
/// cell-volume scaling dx^dim * dt.  Backend is chosen by padded size unless
/// forced; both backends compute the identical zero-padded linear convolution.
inline Field conv_space_time(const Field& u, const Field& v,
                             detail::ConvBackend backend = detail::ConvBackend::AUTO) {
  u.require_same_grid(v);
  if (detail::field_is_zero(u) || detail::field_is_zero(v)) return Field(u.grid, u.species);
  if (backend == detail::ConvBackend::AUTO) {
    std::int64_t padded = fft::next_fast_size(2 * (u.grid.nt + 1));
    for (int a = 0; a < u.grid.dim; ++a) padded *= fft::next_fast_size(2 * u.grid.nx);
    backend = padded <= detail::conv_full_fft_budget() ? detail::ConvBackend::FULL_FFT
                                                       : detail::ConvBackend::SLICE_FFT;
  }
  return backend == detail::ConvBackend::FULL_FFT ? detail::conv_full_fft(u, v)
                                                  : detail::conv_slice_fft(u, v);
}

// ============================================================================
// Index convolution
// ============================================================================
/// (u_{0:i-1} *^d v_{0:i-1})(x,t) = sum_{j=0}^{i-1} u_j(x,t) v_{i-1-j}(x,t).
inline Field index_conv(const std::vector<Field>& us, const std::vector<Field>& vs, int i) {
  if (i < 1) throw LengthMismatch("index_conv order must be >= 1");
  if (int(us.size()) < i || int(vs.size()) < i)
    throw LengthMismatch("index_conv needs at least " + std::to_string(i) + " coefficients");
  for (const auto& f : us) f.require_same_grid(us.front());
  for (const auto& f : vs) f.require_same_grid(us.front());
  Field out(us.front().grid, "index_conv");
  const std::int64_t n = out.grid.n_values();
  for (int j = 0; j < i; ++j) {
    const auto& a = us[std::size_t(j)].values;
    const auto& b = vs[std::size_t(i - 1 - j)].values;
    for (std::int64_t s = 0; s < n; ++s) out.values[std::size_t(s)] += a[std::size_t(s)] * b[std::size_t(s)];
  }
  return out;
}

}  // namespace rdmc
