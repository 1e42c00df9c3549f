#pragma once

/// Waveform post-processing: ripple metrics, settling detection, amplitude
/// spectra, attenuation comparison, and energy accounting reconstructed
/// from recorded channels.
///
/// Spectra use a fixed convention: the record is resampled onto a uniform
/// grid at its median step, mean-detrended, windowed, and transformed; the
/// result is a single-sided peak-amplitude spectrum with coherent-gain
/// correction, so a bin-centered unit sinusoid reads 1.0 V under either
/// window. dB values appear only in attenuation records.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smpsim/engine.hpp"
#include "smpsim/netlist.hpp"

namespace smpsim {

struct RippleMetrics {
    double mean = 0.0;        // time-weighted (trapezoidal) average, V
    double ripple_pp = 0.0;   // max - min over the window, V
    double ripple_rms = 0.0;  // RMS of (v - mean), V
    double t_start = 0.0;
    double t_end = 0.0;
};

enum class WindowKind { Rect, Hann };

struct Spectrum {
    std::vector<double> freqs;       // Hz, uniform ascending, freqs[0] = 0
    std::vector<double> amplitudes;  // single-sided peak amplitude, V
    double resolution = 0.0;         // bin spacing, Hz
    WindowKind window = WindowKind::Hann;
};

struct AttenuationRecord {
    std::vector<double> freqs;
    std::vector<double> db;  // 20*log10(a/b), floored amplitudes
    bool rebinned = false;   // true when b was interpolated onto a's grid
};

struct PortSpectra {
    Spectrum positive;
    std::optional<Spectrum> negative;
};

struct EnergyBalance {
    double e_source = 0.0;
    double e_load = 0.0;
    double e_dissipated = 0.0;
    double e_stored_delta = 0.0;
    double residual_frac = 0.0;
    std::map<std::string, double> dissipated_by_device;
};

struct ComplianceResult {
    bool pass_strict = false;  // ripple_pp <= limit_low
    bool pass_loose = false;   // ripple_pp <= limit_high
};

/// Mean / peak-to-peak / RMS ripple of one channel over [t_start, t_end].
/// The window must lie inside the record and contain at least two samples.
RippleMetrics ripple_metrics(const Waveforms& w, std::string_view channel,
                             double t_start, double t_end);

/// Appends a derived channel holding the sample-wise difference a - b and
/// returns its name ("a-b"). Needed when a circuit's local return rail is
/// not the global reference (a LISN floats it on its series inductors):
/// a node voltage then includes the rail bounce, and the quantity across a
/// load is the difference of its two terminal voltages. Replaces the data
/// if the derived channel already exists.
std::string append_difference(Waveforms& w, std::string_view a,
                              std::string_view b);

/// Earliest time after which the signal stays within +/- band_frac*|final|
/// of its final value (mean of the last 10% of the record). avg_window > 0
/// applies a trailing moving average of that many seconds first, which
/// suppresses switching ripple so only the envelope is judged. Returns
/// nullopt when the record never settles.
std::optional<double> settling_time(const Waveforms& w, std::string_view channel,
                                    double band_frac = 0.02,
                                    double avg_window = 0.0);

/// Single-sided amplitude spectrum of a channel from t_start to the end of
/// the record. The samples are linearly resampled at the median recorded
/// step; the transform length is the largest power of two that fits (at
/// most 2^18 points, at least 2^12 or the call throws). The DC bin carries
/// the absolute mean of the resampled segment.
Spectrum compute_spectrum(const Waveforms& w, std::string_view channel,
                          WindowKind window, double t_start);

/// Hann spectra of the LISN measurement ports. Requires the channel
/// v(lisnp_port); includes v(lisnn_port) when present. t_start < 0 skips
/// the first quarter of the record.
PortSpectra lisn_port_spectrum(const Waveforms& w, double t_start = -1.0);

/// Per-bin attenuation 20*log10(a/b) with a 1e-12 V amplitude floor.
/// When the grids differ, b is linearly interpolated onto a's grid;
/// throws if the frequency ranges do not overlap.
AttenuationRecord spectrum_attenuation(const Spectrum& a, const Spectrum& b);

/// Energy accounting reconstructed from recorded waveforms: every node
/// voltage and every inductor/source branch current must be present.
/// residual_frac compares source energy against load + dissipation +
/// stored-energy change.
EnergyBalance energy_balance(const Circuit& c, const Waveforms& w);

/// Ripple acceptability against a strict and a loose peak-to-peak limit.
ComplianceResult ripple_compliance(const RippleMetrics& m,
                                   double limit_low = 50e-6,
                                   double limit_high = 100e-6);

/// Largest amplitude within +/- tol_bins bins of frequency f.
double spectrum_peak(const Spectrum& s, double f, double tol_bins = 2.0);

/// Mean per-bin attenuation of b relative to a across [f_lo, f_hi],
/// restricted to bins where a carries signal (amplitude >= signal_floor).
/// Throws if no bin in the band qualifies.
double band_mean_attenuation(const Spectrum& a, const Spectrum& b, double f_lo,
                             double f_hi, double signal_floor = 1e-10);

/// |H| = amplitude ratio out/in at frequency f, read from spectra of two
/// channels of the same record. Intended for periodic drives whose
/// harmonics sit on bin centers.
double transfer_ratio(const Waveforms& w, std::string_view in_channel,
                      std::string_view out_channel, double f, double t_start,
                      WindowKind window = WindowKind::Hann);

}  // namespace smpsim
