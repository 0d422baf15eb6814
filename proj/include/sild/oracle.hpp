#pragma once

// Closed-form check of the motivation example: linear classifiers on node
// degree trajectories d_v = d_v1 (invariant) + d_v2 (variant), labels
// y_v = g^T d_v1. A least-squares time-domain classifier can be driven to
// arbitrarily large error by scaling a variant trajectory, while a spectral
// classifier with a mask that removes the variant band cannot.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <set>
#include <vector>

#include "sild/errors.hpp"
#include "sild/fft.hpp"
#include "sild/rng.hpp"

namespace sild::oracle {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

struct ToyDataset {
  std::size_t length = 0;
  std::vector<VectorXd> d1, d2;
  VectorXd g;
  VectorXd y;
  std::vector<std::size_t> band1, band2;  // closed under k -> T-k
};

inline MatrixXcd fourier_matrix(std::size_t t) {
  const auto b = spectral::fourier_basis<double>(t);
  MatrixXcd phi(t, t);
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t j = 0; j < t; ++j) phi(k, j) = {b.real_part[k * t + j], b.imag_part[k * t + j]};
  return phi;
}

inline std::vector<std::size_t> symmetric_closure(const std::vector<std::size_t>& band, std::size_t t) {
  std::set<std::size_t> s;
  for (auto k : band) {
    if (k >= t) throw ValidationError("toy dataset: frequency " + std::to_string(k) + " outside [0,T)");
    s.insert(k);
    s.insert((t - k) % t);
  }
  return {s.begin(), s.end()};
}

namespace detail {

// Real signal whose spectrum is supported on `band` (already symmetric).
inline VectorXd band_limited(const std::vector<std::size_t>& band, std::size_t t, double scale, Rng& rng,
                             const MatrixXcd& phi) {
  VectorXcd z = VectorXcd::Zero(static_cast<Eigen::Index>(t));
  for (auto k : band) {
    const std::size_t kc = (t - k) % t;
    if (kc < k) continue;
    if (kc == k) {
      z(static_cast<Eigen::Index>(k)) = scale * rng.normal();
    } else {
      const std::complex<double> c(scale * rng.normal(), scale * rng.normal());
      z(static_cast<Eigen::Index>(k)) = c;
      z(static_cast<Eigen::Index>(kc)) = std::conj(c);
    }
  }
  return (phi.adjoint() * z).real();
}

inline MatrixXd pinv(const MatrixXd& a) { return a.completeOrthogonalDecomposition().pseudoInverse(); }
inline MatrixXcd pinv(const MatrixXcd& a) { return a.completeOrthogonalDecomposition().pseudoInverse(); }

}  // namespace detail

inline ToyDataset build_toy_dataset(std::size_t n_nodes, std::size_t t, const std::vector<std::size_t>& b1,
                                    const std::vector<std::size_t>& b2, double scale, std::uint64_t seed,
                                    bool disjoint = true) {
  if (n_nodes == 0) throw ValidationError("toy dataset: need at least one node");
  if (t == 0 || t % 2 != 0) throw ValidationError("toy dataset: T must be even and positive");
  ToyDataset d;
  d.length = t;
  d.band1 = symmetric_closure(b1, t);
  d.band2 = symmetric_closure(b2, t);
  if (disjoint) {
    for (auto k : d.band1)
      if (std::binary_search(d.band2.begin(), d.band2.end(), k))
        throw ValidationError("toy dataset: bands overlap at frequency " + std::to_string(k) +
                              " but disjoint bands were requested");
  }
  const auto phi = fourier_matrix(t);
  Rng rng(derive_seed(seed, 0x70e));
  d.g = VectorXd(static_cast<Eigen::Index>(t));
  for (Eigen::Index i = 0; i < d.g.size(); ++i) d.g(i) = rng.normal();
  d.y = VectorXd(static_cast<Eigen::Index>(n_nodes));
  for (std::size_t v = 0; v < n_nodes; ++v) {
    d.d1.push_back(detail::band_limited(d.band1, t, scale, rng, phi));
    d.d2.push_back(detail::band_limited(d.band2, t, scale, rng, phi));
    d.y(static_cast<Eigen::Index>(v)) = d.g.dot(d.d1.back());
  }
  return d;
}

struct TimeFit {
  VectorXd w;
  double train_risk = 0.0;
};

inline MatrixXd time_design(const ToyDataset& d, const VectorXd& m) {
  MatrixXd x(static_cast<Eigen::Index>(d.d1.size()), static_cast<Eigen::Index>(d.length));
  for (std::size_t v = 0; v < d.d1.size(); ++v)
    x.row(static_cast<Eigen::Index>(v)) = m.cwiseProduct(d.d1[v] + d.d2[v]).transpose();
  return x;
}

// Minimum-norm least-squares w for mean (w^T (m . d_v) - y_v)^2.
inline TimeFit optimal_time_classifier(const ToyDataset& d, const VectorXd& m) {
  if (static_cast<std::size_t>(m.size()) != d.length) throw ValidationError("time mask length must equal T");
  const MatrixXd x = time_design(d, m);
  TimeFit f;
  f.w = detail::pinv(x) * d.y;
  f.train_risk = (x * f.w - d.y).squaredNorm() / static_cast<double>(d.y.size());
  return f;
}

struct OodCurve {
  std::vector<double> alpha, error;
  double c = 0.0;         // w^T (m . d_v1) - y_v for the probe
  double slope = 0.0;     // sum_i m_i^2 w_i^2
  bool trivial = false;   // masked classifier is zero
};

// Probe node keeps its invariant trajectory; its variant one becomes alpha * (m . w).
inline OodCurve ood_error_curve(const ToyDataset& d, const TimeFit& fit, const VectorXd& m, std::size_t probe,
                                const std::vector<double>& alphas) {
  if (probe >= d.d1.size()) throw ValidationError("probe node out of range");
  OodCurve out;
  const VectorXd mw = m.cwiseProduct(fit.w);
  out.c = fit.w.dot(m.cwiseProduct(d.d1[probe])) - d.y(static_cast<Eigen::Index>(probe));
  out.slope = m.cwiseProduct(mw).dot(fit.w);
  out.trivial = mw.norm() == 0.0;
  for (double a : alphas) {
    const VectorXd dv = d.d1[probe] + a * mw;
    const double r = fit.w.dot(m.cwiseProduct(dv)) - d.y(static_cast<Eigen::Index>(probe));
    out.alpha.push_back(a);
    out.error.push_back(r * r);
  }
  return out;
}

inline VectorXcd spectrum(const VectorXd& x, const MatrixXcd& phi) { return phi * x.cast<std::complex<double>>(); }

// 0 on every bin where some node's variant spectrum is non-negligible.
inline VectorXd disjoint_band_mask(const ToyDataset& d, double tol = 1e-9) {
  for (auto k : d.band1)
    if (std::binary_search(d.band2.begin(), d.band2.end(), k))
      throw ValidationError("disjoint_band_mask: invariant and variant bands overlap at frequency " +
                            std::to_string(k) + "; the bounded-error construction needs disjoint bands");
  const auto phi = fourier_matrix(d.length);
  VectorXd m = VectorXd::Ones(static_cast<Eigen::Index>(d.length));
  for (const auto& d2 : d.d2) {
    const VectorXcd z = spectrum(d2, phi);
    for (Eigen::Index k = 0; k < z.size(); ++k)
      if (std::abs(z(k)) > tol) m(k) = 0.0;
  }
  return m;
}

inline VectorXd band_indicator(const std::vector<std::size_t>& band, std::size_t t) {
  VectorXd m = VectorXd::Zero(static_cast<Eigen::Index>(t));
  for (auto k : band) m(static_cast<Eigen::Index>(k)) = 1.0;
  return m;
}

struct SpectralFit {
  VectorXcd u;
  double train_risk = 0.0;
};

inline MatrixXcd spectral_design(const ToyDataset& d, const VectorXd& m) {
  const auto phi = fourier_matrix(d.length);
  MatrixXcd x(static_cast<Eigen::Index>(d.d1.size()), static_cast<Eigen::Index>(d.length));
  for (std::size_t v = 0; v < d.d1.size(); ++v)
    x.row(static_cast<Eigen::Index>(v)) =
        m.cast<std::complex<double>>().cwiseProduct(spectrum(d.d1[v] + d.d2[v], phi)).transpose();
  return x;
}

// Complex least squares u = pinv(X) y on masked spectrums.
inline SpectralFit optimal_spectral_classifier(const ToyDataset& d, const VectorXd& m) {
  if (static_cast<std::size_t>(m.size()) != d.length) throw ValidationError("spectral mask length must equal T");
  const MatrixXcd x = spectral_design(d, m);
  SpectralFit f;
  f.u = detail::pinv(x) * d.y.cast<std::complex<double>>();
  f.train_risk = (x * f.u - d.y.cast<std::complex<double>>()).squaredNorm() / static_cast<double>(d.y.size());
  return f;
}

// |u^T (m . Phi (d_v1 + alpha d_v2)) - y_v|^2 for each alpha.
inline std::vector<double> spectral_classifier_error(const ToyDataset& d, const SpectralFit& fit, const VectorXd& m,
                                                     std::size_t probe, const std::vector<double>& alphas) {
  if (probe >= d.d1.size()) throw ValidationError("probe node out of range");
  const auto phi = fourier_matrix(d.length);
  const VectorXcd mc = m.cast<std::complex<double>>();
  std::vector<double> out;
  for (double a : alphas) {
    const VectorXcd z = mc.cwiseProduct(spectrum(d.d1[probe] + a * d.d2[probe], phi));
    out.push_back(std::norm(z.cwiseProduct(fit.u).sum() - d.y(static_cast<Eigen::Index>(probe))));
  }
  return out;
}

}  // namespace sild::oracle
