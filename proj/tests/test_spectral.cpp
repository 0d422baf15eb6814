#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sild/fft.hpp"

using namespace sild;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor<double> random_signal(std::size_t t, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  Tensor<double> x({t, cols});
  for (auto& v : x.data) v = d(gen);
  return x;
}

}  // namespace

class FftLengths : public ::testing::TestWithParam<std::size_t> {};

TEST_P(FftLengths, MatchesNaiveDft) {
  const std::size_t t = GetParam(), cols = 3;
  const auto x = random_signal(t, cols, t);
  const auto z = spectral::fft_time(x);
  for (std::size_t c = 0; c < cols; ++c) {
    const auto ref = oracle_ref::naive_dft(x.data, t, cols, c);
    for (std::size_t k = 0; k < t; ++k) {
      EXPECT_NEAR(z.re[k * cols + c], ref[k].real(), 1e-10);
      EXPECT_NEAR(z.im[k * cols + c], ref[k].imag(), 1e-10);
    }
  }
}

TEST_P(FftLengths, RoundTripAndParseval) {
  const std::size_t t = GetParam();
  const auto x = random_signal(t, 4, 100 + t);
  const auto z = spectral::fft_time(x);
  const auto back = spectral::ifft_time(z, t);
  double e_time = 0, e_freq = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(back.real[i], x[i], 1e-10);
    e_time += x[i] * x[i];
    e_freq += z.re[i] * z.re[i] + z.im[i] * z.im[i];
  }
  EXPECT_LT(back.max_imag, 1e-10);
  EXPECT_NEAR(e_freq / e_time, 1.0, 1e-12);
}

INSTANTIATE_TEST_SUITE_P(PowerOfTwoAndOdd, FftLengths, ::testing::Values(1, 2, 3, 5, 8, 12, 16, 17, 50, 64, 97));

TEST(Spectral, ConstantSignalHasOnlyDc) {
  Tensor<double> x({8, 1}, 2.0);
  const auto z = spectral::fft_time(x);
  EXPECT_NEAR(z.re[0], 2.0 * std::sqrt(8.0), 1e-12);
  for (std::size_t k = 1; k < 8; ++k) {
    EXPECT_NEAR(z.re[k], 0.0, 1e-12);
    EXPECT_NEAR(z.im[k], 0.0, 1e-12);
  }
}

TEST(Spectral, RealSignalConjugateSymmetry) {
  const auto x = random_signal(10, 2, 3);
  const auto z = spectral::fft_time(x);
  for (std::size_t k = 1; k < 10; ++k)
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_NEAR(z.re[k * 2 + c], z.re[(10 - k) * 2 + c], 1e-12);
      EXPECT_NEAR(z.im[k * 2 + c], -z.im[(10 - k) * 2 + c], 1e-12);
    }
}

TEST(Spectral, AmplitudePhaseReconstructs) {
  const auto z = spectral::fft_time(random_signal(9, 3, 4));
  const auto [amp, phase] = spectral::amplitude_phase(z);
  for (std::size_t i = 0; i < amp.size(); ++i) {
    EXPECT_NEAR(amp[i] * std::cos(phase[i]), z.re[i], 1e-12);
    EXPECT_NEAR(amp[i] * std::sin(phase[i]), z.im[i], 1e-12);
    EXPECT_GE(amp[i], 0.0);
  }
}

TEST(Spectral, InverseRejectsTruncatedSpectrum) {
  const auto z = spectral::fft_time(random_signal(8, 1, 5));
  EXPECT_THROW(spectral::ifft_time(z, 6), ValidationError);
}

TEST(Spectral, NonFiniteInputThrows) {
  Tensor<double> x({4, 1});
  x[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(spectral::fft_time(x), NumericError);
}

TEST(Spectral, BasisIsUnitary) {
  const std::size_t t = 7;
  const auto b = spectral::fourier_basis<double>(t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      std::complex<double> s = 0;
      for (std::size_t k = 0; k < t; ++k)
        s += std::complex<double>(b.real_part[k * t + i], -b.imag_part[k * t + i]) *
             std::complex<double>(b.real_part[k * t + j], b.imag_part[k * t + j]);
      EXPECT_NEAR(s.real(), i == j ? 1.0 : 0.0, 1e-12);
      EXPECT_NEAR(s.imag(), 0.0, 1e-12);
    }
}

TEST(Spectral, DftBackwardMatchesFiniteDifferences) {
  const auto x = random_signal(6, 2, 6);
  const auto w = random_signal(6, 2, 7);
  auto loss = [&](Tape<double>& tape, const ad::Var<double>& h) {
    auto [re, im] = spectral::dft(h);
    auto wc = tape.constant(w);
    return ad::sum_all(ad::square(re) * wc + im * wc);
  };
  Tape<double> tape;
  auto h = tape.variable(x);
  tape.backward(loss(tape, h));
  const auto g = tape.grad(h);
  auto f = [&](const std::vector<double>& d) {
    Tape<double> tp;
    return loss(tp, tp.constant(Tensor<double>(x.shape, d))).item();
  };
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(g[i], oracle_ref::central_difference(f, x.data, i, 1e-6), 1e-7);
}

TEST(Spectral, IdftRealBackwardMatchesFiniteDifferences) {
  const auto re = random_signal(5, 3, 8), im = random_signal(5, 3, 9), w = random_signal(5, 3, 10);
  auto loss = [&](Tape<double>& tape, const ad::Var<double>& a, const ad::Var<double>& b) {
    return ad::sum_all(ad::square(spectral::idft_real(a, b)) * tape.constant(w));
  };
  Tape<double> tape;
  auto a = tape.variable(re), b = tape.variable(im);
  tape.backward(loss(tape, a, b));
  auto fa = [&](const std::vector<double>& d) {
    Tape<double> tp;
    return loss(tp, tp.constant(Tensor<double>(re.shape, d)), tp.constant(im)).item();
  };
  auto fb = [&](const std::vector<double>& d) {
    Tape<double> tp;
    return loss(tp, tp.constant(re), tp.constant(Tensor<double>(im.shape, d))).item();
  };
  for (std::size_t i = 0; i < re.size(); ++i) {
    EXPECT_NEAR(tape.grad(a)[i], oracle_ref::central_difference(fa, re.data, i, 1e-6), 1e-7);
    EXPECT_NEAR(tape.grad(b)[i], oracle_ref::central_difference(fb, im.data, i, 1e-6), 1e-7);
  }
}

TEST(Spectral, IdftInvertsDftOnTape) {
  const auto x = random_signal(11, 2, 11);
  Tape<double> tape;
  auto [re, im] = spectral::dft(tape.constant(x));
  const auto back = spectral::idft_real(re, im).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
}
