#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcs/constellation.hpp"

namespace gcs {

struct MiEstimate {
  double mi_bits_per_2d = 0;
  double mi_bits_per_4d = 0;  // dual polarisation, identical constellations: 2 x per-2D
  std::size_t n_samples = 0;
  double standard_error = 0;
  bool low_sample_count = false;  // fewer than 100 samples
};

inline constexpr std::size_t kDefaultMiSamples = std::size_t{1} << 17;

/**
 * MI under a memoryless Gaussian auxiliary channel with uniform priors,
 *   log2 M - E[ log2 sum_j exp((|y - x|^2 - |y - x_j|^2) / sigma2) ],
 * by Monte-Carlo over y = x + n, n ~ CN(0, sigma2). Transmitted symbols are
 * stratified (each point used equally often). `c` must be unit power.
 */
MiEstimate mi_gaussian_auxiliary(const Constellation& c, double sigma2, std::mt19937_64& rng,
                                 std::size_t n_samples = kDefaultMiSamples);

/**
 * Same estimator on measured pairs. `labels` index the transmitted points of
 * `c`; the received samples are first fitted with one complex gain onto the
 * transmitted ones and sigma2 is the residual variance of that fit.
 */
MiEstimate mi_from_pairs(const Constellation& c, std::span<const int> labels, std::span<const cdouble> received);

inline constexpr double kSnrCapDb = 60.0;

/// Least-squares complex gain h minimising sum |y - h x|^2.
cdouble fit_complex_gain(std::span<const cdouble> x, std::span<const cdouble> y);

/// 10 log10(mean|h x|^2 / mean|y - h x|^2) after the gain fit; capped at 60 dB. Needs >= 1000 pairs.
double effective_snr_estimate(std::span<const cdouble> x, std::span<const cdouble> y);

struct SweepRow {
  std::string constellation;
  double power_dbm = 0;
  double snr_eff_db = 0;
  double mi_bit_4d = 0;
  double mu4 = 0;
  double mu6 = 0;
  std::string source;  // "model" or "ssf"
  std::string error;   // non-empty when the point failed
};

void write_sweep_header(std::ostream& out);
void write_sweep_row(std::ostream& out, const SweepRow& row);

}  // namespace gcs
