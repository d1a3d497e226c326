#include "sleepstate/dpss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sleepstate/error.hpp"

namespace sleepstate {

namespace {

struct Tridiagonal {
  std::vector<double> diag;
  std::vector<double> off;  // off[i] couples rows i and i + 1
};

Tridiagonal slepian_matrix(std::size_t n, double w) {
  Tridiagonal t;
  t.diag.resize(n);
  t.off.resize(n - 1);
  const double c = std::cos(2.0 * std::numbers::pi * w);
  const double nm1 = static_cast<double>(n) - 1.0;
  for (std::size_t l = 0; l < n; ++l) {
    const double h = (nm1 - 2.0 * static_cast<double>(l)) / 2.0;
    t.diag[l] = h * h * c;
  }
  for (std::size_t l = 1; l < n; ++l) {
    const double x = static_cast<double>(l);
    t.off[l - 1] = x * (static_cast<double>(n) - x) / 2.0;
  }
  return t;
}

// Number of eigenvalues strictly below x (Sturm sequence).
std::size_t count_below(const Tridiagonal& t, double x, double pivmin) {
  std::size_t count = 0;
  double q = t.diag[0] - x;
  if (std::abs(q) < pivmin) q = -pivmin;
  if (q < 0.0) ++count;
  for (std::size_t i = 1; i < t.diag.size(); ++i) {
    q = t.diag[i] - x - t.off[i - 1] * t.off[i - 1] / q;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0.0) ++count;
  }
  return count;
}

// index-th smallest eigenvalue by bisection.
double bisect_eigenvalue(const Tridiagonal& t, std::size_t index) {
  const std::size_t n = t.diag.size();
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(t.off[i - 1]) : 0.0) + (i + 1 < n ? std::abs(t.off[i]) : 0.0);
    lo = std::min(lo, t.diag[i] - r);
    hi = std::max(hi, t.diag[i] + r);
    norm = std::max(norm, std::abs(t.diag[i]) + r);
  }
  const double pivmin = std::numeric_limits<double>::min() * std::max(1.0, norm * norm);
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))) break;
    if (count_below(t, mid, pivmin) > index) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Solves (T - shift I) x = b in place using LU with partial pivoting.
void solve_shifted(const Tridiagonal& t, double shift, std::vector<double>& b) {
  const std::size_t n = t.diag.size();
  std::vector<double> d(n), dl(t.off), du(t.off), du2(n, 0.0);
  std::vector<bool> swapped(n, false);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = t.diag[i] - shift;
    scale = std::max(scale, std::abs(d[i]));
  }
  const double tiny = std::numeric_limits<double>::epsilon() * std::max(scale, 1.0);

  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(d[i]) >= std::abs(dl[i])) {
      if (d[i] == 0.0) d[i] = tiny;
      const double fact = dl[i] / d[i];
      dl[i] = fact;
      d[i + 1] -= fact * du[i];
    } else {
      const double fact = d[i] / dl[i];
      d[i] = dl[i];
      dl[i] = fact;
      const double temp = du[i];
      du[i] = d[i + 1];
      d[i + 1] = temp - fact * d[i + 1];
      if (i + 2 < n) {
        du2[i] = du[i + 1];
        du[i + 1] = -fact * du[i + 1];
      }
      swapped[i] = true;
    }
  }
  if (d[n - 1] == 0.0) d[n - 1] = tiny;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!swapped[i]) {
      b[i + 1] -= dl[i] * b[i];
    } else {
      const double temp = b[i] - dl[i] * b[i + 1];
      b[i] = b[i + 1];
      b[i + 1] = temp;
    }
  }
  b[n - 1] /= d[n - 1];
  if (n >= 2) b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
  for (std::size_t k = n - 2; k-- > 0;) {
    b[k] = (b[k] - du[k] * b[k + 1] - du2[k] * b[k + 2]) / d[k];
  }
}

void normalize(std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double inv = 1.0 / std::sqrt(ss);
  for (double& x : v) x *= inv;
}

std::vector<double> inverse_iteration(const Tridiagonal& t, double eigenvalue,
                                      const std::vector<std::vector<double>>& previous) {
  const std::size_t n = t.diag.size();
  std::vector<double> v(n);
  for (std::size_t l = 0; l < n; ++l) {
    v[l] = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(l) + 0.3);
  }
  normalize(v);
  for (int iter = 0; iter < 3; ++iter) {
    solve_shifted(t, eigenvalue, v);
    // Re-orthogonalize against already accepted vectors (two passes).
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& p : previous) {
        double dot = 0.0;
        for (std::size_t l = 0; l < n; ++l) dot += p[l] * v[l];
        for (std::size_t l = 0; l < n; ++l) v[l] -= dot * p[l];
      }
    }
    normalize(v);
  }
  return v;
}

void apply_sign_convention(std::vector<double>& taper, std::size_t order) {
  bool flip = false;
  if (order % 2 == 0) {
    double sum = 0.0;
    for (double x : taper) sum += x;
    flip = sum < 0.0;
  } else {
    const double thresh = std::max(1e-7, 1.0 / static_cast<double>(taper.size()));
    for (double x : taper) {
      if (x * x > thresh) {
        flip = x < 0.0;
        break;
      }
    }
  }
  if (flip) {
    for (double& x : taper) x = -x;
  }
}

}  // namespace

double spectral_concentration(const std::vector<double>& taper, double half_bandwidth) {
  const std::size_t n = taper.size();
  double r0 = 0.0;
  for (double x : taper) r0 += x * x;
  double acc = 2.0 * half_bandwidth * r0;
  for (std::size_t tau = 1; tau < n; ++tau) {
    double r = 0.0;
    for (std::size_t l = 0; l + tau < n; ++l) r += taper[l] * taper[l + tau];
    const double x = static_cast<double>(tau);
    acc += 2.0 * r * std::sin(2.0 * std::numbers::pi * half_bandwidth * x) / (std::numbers::pi * x);
  }
  return acc;
}

TaperBank compute_dpss(std::size_t length, double time_bandwidth, std::size_t count) {
  if (count < 1) throw ValidationError("at least one taper is required");
  if (!(time_bandwidth > 0.0)) throw ValidationError("time-bandwidth product must be positive");
  const double budget = std::floor(2.0 * time_bandwidth) - 1.0;
  if (static_cast<double>(count) > budget) {
    throw ValidationError("taper count exceeds concentration budget");
  }
  if (length < 2 * count) throw ValidationError("window too short for the requested taper count");

  TaperBank bank;
  bank.length = length;
  bank.time_bandwidth = time_bandwidth;
  const double w = time_bandwidth / static_cast<double>(length);
  const Tridiagonal t = slepian_matrix(length, w);

  for (std::size_t m = 0; m < count; ++m) {
    const double ev = bisect_eigenvalue(t, length - 1 - m);
    std::vector<double> v = inverse_iteration(t, ev, bank.tapers);
    apply_sign_convention(v, m);
    bank.tapers.push_back(std::move(v));
  }
  for (const auto& taper : bank.tapers) {
    bank.concentrations.push_back(spectral_concentration(taper, w));
  }
  return bank;
}

}  // namespace sleepstate
