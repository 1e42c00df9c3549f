#pragma once

/// File emitters and readers for the command-line tools: waveform CSV
/// (12-digit scientific, round-trips losslessly), spectrum and attenuation
/// CSV, and standalone SVG line plots. All writes go through a temp file
/// in the destination directory followed by a rename, so readers never
/// observe a half-written file.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "smpsim/analysis.hpp"
#include "smpsim/engine.hpp"

namespace smpsim::io {

void write_text_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Header `time,<channel>,...`; channel names containing commas or quotes
/// are double-quoted. One row per sample, %.12e.
void write_waveforms_csv(const std::filesystem::path& path, const Waveforms& w);
Waveforms read_waveforms_csv(const std::filesystem::path& path);

/// Header `freq_hz,amplitude_v`.
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s);
Spectrum read_spectrum_csv(const std::filesystem::path& path);

/// Header `freq_hz,attenuation_db`.
void write_attenuation_csv(const std::filesystem::path& path,
                           const AttenuationRecord& r);

/// Single-series line plot. Dense series are decimated per pixel bucket
/// (min/max envelope), so arbitrarily long records stay a small file.
void write_plot_svg(const std::filesystem::path& path,
                    const std::vector<double>& x, const std::vector<double>& y,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label, bool logx = false);

}  // namespace smpsim::io
