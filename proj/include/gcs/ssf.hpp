#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gcs/channel.hpp"
#include "gcs/constellation.hpp"

namespace gcs {

/**
 * Split-step Fourier simulation settings. `link` carries the fibre and
 * amplifier parameters; the rest is numerics. The configured launch power
 * is applied to each polarisation of each channel.
 */
struct SsfConfig {
  LinkConfig link;
  int n_symbols = 1 << 17;
  int oversampling = 32;
  int n_polarizations = 2;
  double rolloff = 0.05;
  double step_km = 0.1;
  std::uint64_t seed = 1;

  /// Reference system: 2^17 symbols, 32x oversampling, 5 channels, 0.1 km steps.
  static SsfConfig full_scale();
  /// Desk-scale numerics: 2^14 symbols, 8x oversampling, 3 channels, 0.5 km steps.
  static SsfConfig desk_scale();

  void validate() const;
  double sample_rate_hz() const { return link.symbol_rate_hz * oversampling; }
  int n_samples() const { return n_symbols * oversampling; }
  int center_channel() const { return link.n_channels / 2; }
  double channel_offset_hz(int channel) const;
};

struct WdmSignal {
  std::vector<std::vector<cdouble>> pols;  // time samples, sqrt(mW)
  double sample_rate_hz = 0;
  std::vector<double> channel_offsets_hz;

  double mean_power_mw(int pol) const;
};

struct ModulatedSignal {
  WdmSignal signal;
  std::vector<std::vector<std::vector<int>>> labels;  // [channel][pol] -> symbol labels
};

/// Root-raised-cosine amplitude response at baseband frequency f (peak 1).
double rrc_response(double f_hz, double symbol_rate_hz, double rolloff);

/**
 * i.i.d. uniform symbols per channel and polarisation, RRC shaped (exact,
 * circular, in the frequency domain), shifted onto the channel grid and
 * scaled to the launch power.
 */
ModulatedSignal modulate(const Constellation& c, const SsfConfig& cfg, double power_dbm, std::mt19937_64& rng);

/**
 * One fibre span by the symmetric split-step method: half linear step
 * (dispersion and loss), Manakov Kerr phase 8/9 gamma (|Ex|^2 + |Ey|^2)
 * over the step's effective length, half linear step.
 */
WdmSignal propagate_span(WdmSignal sig, const SsfConfig& cfg);

/// Lumped amplifier: field gain sqrt(G) plus white circular noise of PSD h nu (G F - 1) / 2 per polarisation.
WdmSignal edfa(WdmSignal sig, double gain_db, double nf_db, double carrier_hz, std::mt19937_64& rng);

struct SymbolPairs {
  std::vector<cdouble> transmitted;  // unit-power constellation points, both polarisations concatenated
  std::vector<int> labels;
  std::vector<cdouble> received;     // matched-filter samples, sqrt(mW)
  int sampling_phase = 0;
};

/**
 * Centre-channel receiver: brick-wall channel filter of width Rs (1 + rolloff),
 * inverse dispersion of the whole link, RRC matched filter and symbol-rate
 * sampling at the phase with the largest correlation to the known symbols.
 */
SymbolPairs receive(const WdmSignal& sig, const SsfConfig& cfg, const Constellation& c,
                    const std::vector<std::vector<int>>& center_labels, double total_length_km);

struct TransmissionResult {
  double snr_eff_db = 0;
  double mi_bit_4d = 0;
  double sigma2_total_mw = 0;
  double sigma2_nl_mw = 0;
};

/// modulate -> (span -> EDFA) x n_spans -> receive -> metrics. Deterministic in cfg.seed.
TransmissionResult run_transmission(const Constellation& c, const SsfConfig& cfg, int n_spans, double power_dbm);

}  // namespace gcs
