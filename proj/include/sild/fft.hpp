#pragma once

// Unitary DFT along the leading (time) axis of T x ... tensors.
//
// Convention: Z[k] = sum_t H[t] e^{-j 2 pi k t / T} / sqrt(T), K = T.
// Lengths that are not powers of two go through Bluestein's chirp-z
// reduction to a power-of-two circular convolution.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include "sild/autograd.hpp"
#include "sild/errors.hpp"

namespace sild::spectral {

using cplx = std::complex<double>;

template <typename T>
struct FourierBasis {
  std::size_t length = 0;
  std::vector<T> real_part;  // K x T, row-major
  std::vector<T> imag_part;
};

template <typename T = double>
FourierBasis<T> fourier_basis(std::size_t n) {
  if (n == 0) throw ValidationError("fourier_basis: length must be >= 1");
  FourierBasis<T> b;
  b.length = n;
  b.real_part.resize(n * n);
  b.imag_part.resize(n * n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays small and exact-ish.
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      b.real_part[k * n + t] = static_cast<T>(std::cos(ang) * s);
      b.imag_part[k * n + t] = static_cast<T>(std::sin(ang) * s);
    }
  return b;
}

// Unnormalized in-place transforms of one length-n sequence.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw ValidationError("fft: length must be >= 1");
    if (is_pow2(n)) {
      twiddle_ = make_twiddles(n);
      return;
    }
    m_ = 1;
    while (m_ < 2 * n - 1) m_ <<= 1;
    twiddle_ = make_twiddles(m_);
    chirp_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = std::numbers::pi * static_cast<double>((i * i) % (2 * n)) / static_cast<double>(n);
      chirp_[i] = std::polar(1.0, -ang);
    }
    // Spectrum of the conjugate chirp, wrapped for circular convolution.
    kernel_.assign(m_, cplx{});
    kernel_[0] = std::conj(chirp_[0]);
    for (std::size_t i = 1; i < n; ++i) kernel_[i] = kernel_[m_ - i] = std::conj(chirp_[i]);
    radix2(kernel_.data(), m_, false);
    work_.resize(m_);
  }

  std::size_t size() const noexcept { return n_; }

  // Forward uses e^{-j...}; inverse uses e^{+j...}. Neither scales.
  void transform(cplx* a, bool inverse) {
    if (n_ == 1) return;
    if (m_ == 0) {
      radix2(a, n_, inverse);
      return;
    }
    if (inverse)
      for (std::size_t i = 0; i < n_; ++i) a[i] = std::conj(a[i]);
    std::fill(work_.begin(), work_.end(), cplx{});
    for (std::size_t i = 0; i < n_; ++i) work_[i] = a[i] * chirp_[i];
    radix2(work_.data(), m_, false);
    for (std::size_t i = 0; i < m_; ++i) work_[i] *= kernel_[i];
    radix2(work_.data(), m_, true);
    const double inv_m = 1.0 / static_cast<double>(m_);
    for (std::size_t i = 0; i < n_; ++i) a[i] = work_[i] * inv_m * chirp_[i];
    if (inverse)
      for (std::size_t i = 0; i < n_; ++i) a[i] = std::conj(a[i]);
  }

 private:
  static bool is_pow2(std::size_t n) { return (n & (n - 1)) == 0; }

  static std::vector<cplx> make_twiddles(std::size_t n) {
    std::vector<cplx> w(n / 2 + 1);
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
  }

  // Iterative Cooley-Tukey; n must be a power of two dividing the twiddle size.
  void radix2(cplx* a, std::size_t n, bool inverse) const {
    for (std::size_t i = 1, j = 0; i < n; ++i) {
      std::size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(a[i], a[j]);
    }
    const std::size_t base = 2 * (twiddle_.size() - 1);
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t step = base / len;
      for (std::size_t i = 0; i < n; i += len)
        for (std::size_t j = 0; j < len / 2; ++j) {
          cplx w = twiddle_[j * step];
          if (inverse) w = std::conj(w);
          const cplx u = a[i + j];
          const cplx v = a[i + j + len / 2] * w;
          a[i + j] = u + v;
          a[i + j + len / 2] = u - v;
        }
    }
  }

  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<cplx> twiddle_;
  std::vector<cplx> chirp_;
  std::vector<cplx> kernel_;
  std::vector<cplx> work_;
};

namespace detail {

// Unitary transform of every column of an n x cols array. `im` may be null.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> transform_columns(const T* re, const T* im, std::size_t n, std::size_t cols,
                                                            bool inverse) {
  FftPlan plan(n);
  std::vector<T> out_re(n * cols), out_im(n * cols);
  std::vector<cplx> buf(n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t t = 0; t < n; ++t)
      buf[t] = cplx(static_cast<double>(re[t * cols + c]), im ? static_cast<double>(im[t * cols + c]) : 0.0);
    plan.transform(buf.data(), inverse);
    for (std::size_t k = 0; k < n; ++k) {
      out_re[k * cols + c] = static_cast<T>(buf[k].real() * s);
      out_im[k * cols + c] = static_cast<T>(buf[k].imag() * s);
    }
  }
  return {std::move(out_re), std::move(out_im)};
}

template <typename T>
std::size_t leading(const ad::Shape& s, const char* op) {
  if (s.empty() || s[0] == 0) throw ShapeError(std::string(op) + ": need a non-empty leading time axis");
  return s[0];
}

template <typename T>
void require_finite(const std::vector<T>& v, const char* op) {
  for (const T x : v)
    if (!std::isfinite(static_cast<double>(x))) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace detail

template <typename T>
struct Spectrum {
  ad::Tensor<T> re;
  ad::Tensor<T> im;
};

template <typename T>
Spectrum<T> fft_time(const ad::Tensor<T>& h) {
  const std::size_t n = detail::leading<T>(h.shape, "fft_time");
  detail::require_finite(h.data, "fft_time");
  auto [re, im] = detail::transform_columns<T>(h.data.data(), nullptr, n, h.size() / n, false);
  return {ad::Tensor<T>(h.shape, std::move(re)), ad::Tensor<T>(h.shape, std::move(im))};
}

template <typename T>
struct InverseResult {
  ad::Tensor<T> real;
  double max_imag = 0.0;  // largest discarded imaginary magnitude
};

template <typename T>
InverseResult<T> ifft_time(const Spectrum<T>& z, std::size_t time_length) {
  if (z.re.shape != z.im.shape) throw ShapeError("ifft_time: real and imaginary shapes differ");
  const std::size_t k = detail::leading<T>(z.re.shape, "ifft_time");
  if (k != time_length)
    throw ValidationError("ifft_time: K=" + std::to_string(k) + " differs from T=" + std::to_string(time_length));
  auto [re, im] = detail::transform_columns<T>(z.re.data.data(), z.im.data.data(), k, z.re.size() / k, true);
  InverseResult<T> out{ad::Tensor<T>(z.re.shape, std::move(re)), 0.0};
  for (const T x : im) out.max_imag = std::max(out.max_imag, std::abs(static_cast<double>(x)));
  return out;
}

template <typename T>
InverseResult<T> ifft_time(const Spectrum<T>& z) {
  return ifft_time(z, z.re.shape.empty() ? 0 : z.re.shape[0]);
}

template <typename T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> amplitude_phase(const Spectrum<T>& z) {
  ad::Tensor<T> amp(z.re.shape), phase(z.re.shape);
  for (std::size_t i = 0; i < amp.size(); ++i) {
    const T a = z.re[i], b = z.im[i];
    amp[i] = std::sqrt(a * a + b * b);
    phase[i] = (a == T(0) && b == T(0)) ? T(0) : std::atan2(b, a);
  }
  return {std::move(amp), std::move(phase)};
}

// Differentiable forward transform of a real T x ... trajectory.
template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> dft(const ad::Var<T>& h) {
  auto z = fft_time(h.value());
  auto& tape = h.tape();
  const bool rg = h.requires_grad();
  const std::size_t ih = h.id();
  auto re = tape.record(std::move(z.re), rg, [ih](ad::Tape<T>& tp, const std::vector<T>& g) {
    // d re / dH = C, symmetric; the vjp is C g = Re(unitary inverse of g).
    const std::size_t nn = tp.value(ih).shape[0];
    auto [r, i] = detail::transform_columns<T>(g.data(), nullptr, nn, g.size() / nn, true);
    auto& gh = tp.grad_buffer(ih);
    for (std::size_t x = 0; x < gh.size(); ++x) gh[x] += r[x];
  });
  auto im = tape.record(std::move(z.im), rg, [ih](ad::Tape<T>& tp, const std::vector<T>& g) {
    // S g = Re(inverse of (j g)) = -Im(inverse of g).
    const std::size_t nn = tp.value(ih).shape[0];
    auto [r, i] = detail::transform_columns<T>(g.data(), nullptr, nn, g.size() / nn, true);
    auto& gh = tp.grad_buffer(ih);
    for (std::size_t x = 0; x < gh.size(); ++x) gh[x] -= i[x];
  });
  return {re, im};
}

// Differentiable Re(Phi^H Z).
template <typename T>
ad::Var<T> idft_real(const ad::Var<T>& re, const ad::Var<T>& im) {
  if (re.shape() != im.shape()) throw ShapeError("idft_real: real " + ad::to_string(re.shape()) +
                                                 " and imaginary " + ad::to_string(im.shape()) + " differ");
  auto& tape = ad::detail::same_tape(re, im, "idft_real");
  auto inv = ifft_time(Spectrum<T>{re.value(), im.value()});
  const std::size_t ir = re.id(), ii = im.id();
  return tape.record(std::move(inv.real), re.requires_grad() || im.requires_grad(),
                     [ir, ii](ad::Tape<T>& tp, const std::vector<T>& g) {
                       const std::size_t nn = tp.value(ir).shape[0];
                       auto [c, s] = detail::transform_columns<T>(g.data(), nullptr, nn, g.size() / nn, false);
                       if (tp.requires_grad(ir)) {
                         auto& gr = tp.grad_buffer(ir);
                         for (std::size_t x = 0; x < gr.size(); ++x) gr[x] += c[x];
                       }
                       if (tp.requires_grad(ii)) {
                         // Forward transform gives (C g, S g) with S the sine part of Phi.
                         auto& gi = tp.grad_buffer(ii);
                         for (std::size_t x = 0; x < gi.size(); ++x) gi[x] += s[x];
                       }
                     });
}

}  // namespace sild::spectral
