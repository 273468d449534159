#include "beables/propagators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "beables/errors.hpp"

namespace beables {

namespace {

constexpr double kEulerGamma = 0.57721566490153286061;
const double kTwoPiSq = 2.0 * kPi * kPi;

struct GaussRule {
  std::vector<double> nodes, weights;  // on [-1, 1]
};

const GaussRule& gauss_rule(int n) {
  static std::mutex mutex;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      dp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -z;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = z;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

// Momentum-space weight multiplying p^2 j0(pr) exp(-iEu) / (2 pi^2).
enum class Weight { InverseCube, HalfInverse };

// Which part of j0(pr) is integrated: the whole function, or one of the
// exponentials in j0 = (e^{ipr} - e^{-ipr}) / (2ipr).
enum class Piece { Whole, Outgoing, Incoming };

Complex integrand(Complex p, double mass, double u, double r, Weight weight, Piece piece) {
  const Complex i(0.0, 1.0);
  const Complex energy = std::sqrt(p * p + mass * mass);
  const Complex amp = weight == Weight::InverseCube ? p * p / (energy * energy * energy) : p * p / (2.0 * energy);
  const Complex z = p * r;
  // exponents are combined before exponentiating so that growth and decay
  // along rotated rays cancel instead of overflowing
  Complex value;
  if (piece == Piece::Whole) {
    if (std::abs(z) < 1.0) {
      const Complex radial = std::abs(z) < 1e-4 ? 1.0 - z * z / 6.0 + z * z * z * z / 120.0 : std::sin(z) / z;
      value = radial * std::exp(-i * energy * u);
    } else {
      value = (std::exp(i * z - i * energy * u) - std::exp(-i * z - i * energy * u)) / (2.0 * i * z);
    }
  } else if (piece == Piece::Outgoing) {
    value = std::exp(i * z - i * energy * u) / (2.0 * i * z);
  } else {
    value = -std::exp(-i * z - i * energy * u) / (2.0 * i * z);
  }
  return amp * value / kTwoPiSq;
}

struct Pair {
  Complex fine{0.0, 0.0};
  Complex coarse{0.0, 0.0};
};

template <class F>
Pair panel(const F& f, double a, double b, int nodes) {
  const GaussRule& fine = gauss_rule(nodes);
  const GaussRule& coarse = gauss_rule(nodes / 2);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  Pair out;
  for (std::size_t k = 0; k < fine.nodes.size(); ++k) out.fine += fine.weights[k] * f(mid + half * fine.nodes[k]);
  for (std::size_t k = 0; k < coarse.nodes.size(); ++k)
    out.coarse += coarse.weights[k] * f(mid + half * coarse.nodes[k]);
  out.fine *= half;
  out.coarse *= half;
  return out;
}

// int_P^inf along p = P + direction * s, s >= 0, where the integrand decays
// like exp(-decay * s).
Pair ray_integral(double mass, double u, double r, Weight weight, Piece piece, double start, Complex direction,
                  double decay, int nodes) {
  auto f = [&](double s) { return integrand(start + direction * s, mass, u, r, weight, piece) * direction; };
  Pair total;
  double s0 = 0.0;
  double width = decay > 0.0 ? std::min(start, 1.0 / decay) : start;
  for (int k = 0; k < 200; ++k) {
    const Pair part = panel(f, s0, s0 + width, nodes);
    total.fine += part.fine;
    total.coarse += part.coarse;
    s0 += width;
    if (decay > 0.0 && decay * s0 > 50.0) break;
    if (decay == 0.0 && s0 > 1e13 * start) break;
    width = decay > 0.0 ? std::min(2.0 * width, 8.0 / decay + width) : 2.0 * width;
  }
  return total;
}

// (1/2pi^2) int_0^inf p^2 j0(pr) W(E) exp(-iEu) dp for u > 0 or spacelike
// separations, via a real-axis head and rotated tails.
Pair momentum_integral(double mass, double u, double r, Weight weight, double split, int nodes) {
  Pair total;
  const double freq = u + r;
  const double osc_width = freq > 0.0 ? 0.5 * nodes / freq : std::numeric_limits<double>::infinity();
  double p = 0.0;
  while (p < split) {
    double width = std::min(osc_width, std::max(2.0 * mass, 0.25 * p));
    width = std::min(width, split - p);
    const Pair part = panel([&](double q) { return integrand(Complex(q, 0.0), mass, u, r, weight, Piece::Whole); }, p,
                            p + width, nodes);
    total.fine += part.fine;
    total.coarse += part.coarse;
    p += width;
  }
  const Complex up(0.0, 1.0), down(0.0, -1.0);
  std::vector<Pair> tails;
  if (r == 0.0 || u > r) {
    tails.push_back(ray_integral(mass, u, r, weight, Piece::Whole, split, down, u - r, nodes));
  } else {
    tails.push_back(ray_integral(mass, u, r, weight, Piece::Outgoing, split, up, r - u, nodes));
    tails.push_back(ray_integral(mass, u, r, weight, Piece::Incoming, split, down, r + u, nodes));
  }
  for (const auto& t : tails) {
    total.fine += t.fine;
    total.coarse += t.coarse;
  }
  return total;
}

Complex checked_integral(double mass, double u, double r, Weight weight, const PropagatorSpec& spec) {
  const bool negative = u < 0.0;
  const double au = std::abs(u);
  const double split = spec.cutoff_multiplier * std::max({spec.cutoff_mass, spec.boson_mass, mass});
  const Pair value = momentum_integral(mass, au, r, weight, split, spec.nodes);
  const double diff = std::abs(value.fine - value.coarse);
  // absolute floor for exponentially small spacelike values
  const double floor = 1e-15 * (weight == Weight::InverseCube ? 1.0 : mass * mass) / kTwoPiSq;
  if (!(diff <= spec.tolerance * std::abs(value.fine) + floor) || !std::isfinite(std::abs(value.fine))) {
    std::ostringstream msg;
    msg << "momentum quadrature did not converge at u=" << u << ", r=" << r << ", mass=" << mass
        << " (refinement difference " << diff << ")";
    fail(ErrorKind::QuadratureFailure, msg.str());
  }
  return negative ? std::conj(value.fine) : value.fine;
}

}  // namespace

void PropagatorSpec::validate() const {
  require(boson_mass > 0.0 && std::isfinite(boson_mass), "boson mass must be positive");
  require(cutoff_mass > boson_mass && std::isfinite(cutoff_mass), "cutoff mass must exceed the boson mass");
  require(std::isfinite(coupling), "coupling must be finite");
  require(cutoff_multiplier >= 1.0, "cutoff multiplier must be at least 1");
  require(nodes >= 16 && nodes % 2 == 0, "quadrature needs an even node count of at least 16");
  require(tolerance > 0.0, "quadrature tolerance must be positive");
}

double bessel_k0(double x) {
  if (!(x > 0.0)) fail(ErrorKind::DomainError, "K0 needs a positive argument");
  if (x <= 2.0) {
    const double t = 0.25 * x * x;
    double term = 1.0, i0 = 1.0, tail = 0.0, harmonic = 0.0;
    for (int k = 1; k < 60; ++k) {
      term *= t / (static_cast<double>(k) * k);
      harmonic += 1.0 / k;
      i0 += term;
      tail += term * harmonic;
      if (term < 1e-18 * i0) break;
    }
    return -(std::log(0.5 * x) + kEulerGamma) * i0 + tail;
  }
  if (x > 740.0) return 0.0;
  // Steed's continued fraction for K_0 and K_1
  double b = 2.0 * (1.0 + x), d = 1.0 / b, h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25;
  double q = a1, c = a1, a = -a1, s = 1.0 + q * delh;
  for (int i = 1; i < 10000; ++i) {
    a -= 2.0 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < 1e-17) break;
  }
  return std::sqrt(kPi / (2.0 * x)) * std::exp(-x) / s;
}

double bessel_k1(double x) {
  if (!(x > 0.0)) fail(ErrorKind::DomainError, "K1 needs a positive argument");
  if (x <= 2.0) {
    const double t = 0.25 * x * x;
    double term = 1.0;  // t^k / (k! (k+1)!)
    double h_k = 0.0, h_k1 = 1.0;
    double i1_sum = 1.0;
    double psi_sum = (-2.0 * kEulerGamma + h_k + h_k1) * term;
    for (int k = 1; k < 60; ++k) {
      term *= t / (static_cast<double>(k) * (k + 1.0));
      h_k += 1.0 / k;
      h_k1 += 1.0 / (k + 1.0);
      i1_sum += term;
      psi_sum += (-2.0 * kEulerGamma + h_k + h_k1) * term;
      if (term < 1e-18 * i1_sum) break;
    }
    const double i1 = 0.5 * x * i1_sum;
    return 1.0 / x + std::log(0.5 * x) * i1 - 0.25 * x * psi_sum;
  }
  if (x > 740.0) return 0.0;
  double b = 2.0 * (1.0 + x), d = 1.0 / b, h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25;
  double q = a1, c = a1, a = -a1, s = 1.0 + q * delh;
  for (int i = 1; i < 10000; ++i) {
    a -= 2.0 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < 1e-17) break;
  }
  h = a1 * h;
  const double k0 = std::sqrt(kPi / (2.0 * x)) * std::exp(-x) / s;
  return k0 * (x + 0.5 - h) / x;
}

Complex vacuum_propagator(double mass, const Event& x, const Event& y, const PropagatorSpec& settings) {
  require(mass > 0.0, "propagator mass must be positive");
  const double u = x.t - y.t;
  const double r = distance(x.x, y.x);
  if (r == 0.0 && u == 0.0) fail(ErrorKind::DomainError, "propagator diverges at coincident points");
  if (std::abs(std::abs(u) - r) <= 1e-12 * std::max(std::abs(u), r))
    fail(ErrorKind::DomainError, "propagator is singular on the light cone");
  PropagatorSpec local = settings;
  local.cutoff_mass = std::max(settings.cutoff_mass, mass);
  return checked_integral(mass, u, r, Weight::HalfInverse, local);
}

Complex vacuum_propagator(const PropagatorSpec& spec, const Event& x, const Event& y) {
  spec.validate();
  return vacuum_propagator(spec.boson_mass, x, y, spec) - vacuum_propagator(spec.cutoff_mass, x, y, spec);
}

double g_infinity(double r, double mass) {
  require(mass > 0.0, "mass must be positive");
  return 2.0 * bessel_k0(mass * r) / (4.0 * kPi * kPi);
}

double omega_infinity(const PropagatorSpec& spec, double r) {
  spec.validate();
  require(r >= 0.0, "distance must be non-negative");
  if (r == 0.0) return 0.0;
  const double pref = spec.coupling * spec.coupling / (4.0 * kPi * kPi);
  return pref * (bessel_k0(spec.boson_mass * r) - bessel_k0(spec.cutoff_mass * r) -
                 std::log(spec.cutoff_mass / spec.boson_mass));
}

namespace {

double regulated_static(const PropagatorSpec& spec, double r) {
  if (r == 0.0) return std::log(spec.cutoff_mass / spec.boson_mass) / kTwoPiSq;
  return (bessel_k0(spec.boson_mass * r) - bessel_k0(spec.cutoff_mass * r)) / kTwoPiSq;
}

}  // namespace

Complex regulated_time_kernel(const PropagatorSpec& spec, double r, double u) {
  spec.validate();
  require(r >= 0.0 && std::isfinite(r), "distance must be non-negative");
  require(std::isfinite(u), "time separation must be finite");
  if (u == 0.0) return regulated_static(spec, r);
  return checked_integral(spec.boson_mass, u, r, Weight::InverseCube, spec) -
         checked_integral(spec.cutoff_mass, u, r, Weight::InverseCube, spec);
}

double regulated_g(const PropagatorSpec& spec, double r, double t) {
  require(t >= 0.0, "time must be non-negative");
  if (t == 0.0) return 0.0;
  return regulated_static(spec, r) - regulated_time_kernel(spec, r, t).real();
}

double omega_from_quadrature(const PropagatorSpec& spec, double r, double t) {
  spec.validate();
  require(r >= 0.0, "distance must be non-negative");
  if (r == 0.0 || t == 0.0) return 0.0;
  return 0.5 * spec.coupling * spec.coupling * (regulated_g(spec, r, t) - regulated_g(spec, 0.0, t));
}

double regulated_yukawa(const PropagatorSpec& spec, double r) {
  spec.validate();
  if (r == 0.0) return (spec.cutoff_mass - spec.boson_mass) / (4.0 * kPi);
  return (std::exp(-spec.boson_mass * r) - std::exp(-spec.cutoff_mass * r)) / (4.0 * kPi * r);
}

Complex box_integral(const PropagatorSpec& spec, double r, double a1, double a2, double b1, double b2) {
  auto q = [&](double u) { return regulated_time_kernel(spec, r, u); };
  return 0.5 * (q(a1 - b1) + q(a2 - b2) - q(a1 - b2) - q(a2 - b1));
}

Complex ordered_cell_integral(const PropagatorSpec& spec, double r, double h) {
  require(h > 0.0, "cell width must be positive");
  const Complex i(0.0, 1.0);
  return 0.5 * (regulated_static(spec, r) - regulated_time_kernel(spec, r, h)) - 0.5 * i * h * regulated_yukawa(spec, r);
}

CellKernel regulated_cell_kernel(const PropagatorSpec& spec, const std::vector<Point3>& sites, std::size_t n_steps,
                                 double h) {
  spec.validate();
  require(!sites.empty() && n_steps > 0, "cell kernel needs sites and steps");
  require(h > 0.0, "cell width must be positive");
  const std::size_t ns = sites.size();
  // distinct distances, so each time kernel is computed once
  std::vector<double> radii;
  std::vector<std::size_t> radius_index(ns * ns);
  for (std::size_t a = 0; a < ns; ++a)
    for (std::size_t b = 0; b < ns; ++b) {
      const double r = distance(sites[a], sites[b]);
      std::size_t idx = radii.size();
      for (std::size_t k = 0; k < radii.size(); ++k)
        if (std::abs(radii[k] - r) <= 1e-12 * std::max(1.0, r)) idx = k;
      if (idx == radii.size()) radii.push_back(r);
      radius_index[a * ns + b] = idx;
    }
  // lag[k][j] = int int over cells with time offset j D, j = 0..n_steps-1
  std::vector<std::vector<Complex>> lag(radii.size(), std::vector<Complex>(n_steps));
  std::vector<Complex> diag_ordered(radii.size());
  for (std::size_t k = 0; k < radii.size(); ++k) {
    std::vector<Complex> q(n_steps + 1);
    for (std::size_t j = 0; j <= n_steps; ++j) q[j] = regulated_time_kernel(spec, radii[k], h * static_cast<double>(j));
    lag[k][0] = q[0] - q[1].real();
    for (std::size_t j = 1; j < n_steps; ++j) lag[k][j] = q[j] - 0.5 * q[j + 1] - 0.5 * q[j - 1];
    diag_ordered[k] = 0.5 * (q[0] - q[1]) - 0.5 * Complex(0.0, 1.0) * h * regulated_yukawa(spec, radii[k]);
  }
  const auto dim = static_cast<Eigen::Index>(ns * n_steps);
  CellKernel out{CMatrix::Zero(dim, dim), CMatrix::Zero(dim, dim)};
  for (std::size_t n = 0; n < n_steps; ++n)
    for (std::size_t m = 0; m < n_steps; ++m)
      for (std::size_t a = 0; a < ns; ++a)
        for (std::size_t b = 0; b < ns; ++b) {
          const std::size_t k = radius_index[a * ns + b];
          const auto row = static_cast<Eigen::Index>(n * ns + a), col = static_cast<Eigen::Index>(m * ns + b);
          const Complex value = n >= m ? lag[k][n - m] : std::conj(lag[k][m - n]);
          out.covariance(row, col) = value;
          if (n > m) out.ordered(row, col) = value;
          if (n == m) out.ordered(row, col) = diag_ordered[k];
        }
  return out;
}

}  // namespace beables
