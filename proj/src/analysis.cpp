#include "smpsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "smpsim/devices.hpp"
#include "smpsim/fft.hpp"
#include "smpsim/kernels.hpp"

namespace smpsim {

namespace {

// Index range [i0, i1] covering [t_start, t_end] (endpoints snapped to
// samples, which at the recorded resolutions is far below any tolerance
// asserted on the result).
std::pair<std::size_t, std::size_t> window_indices(const std::vector<double>& t,
                                                   double t_start, double t_end) {
    if (t.size() < 2) throw std::invalid_argument("waveform has fewer than 2 samples");
    if (t_start > t_end) std::swap(t_start, t_end);
    const double slack = 1e-12 * (t.back() - t.front());
    if (t_start < t.front() - slack || t_end > t.back() + slack)
        throw std::invalid_argument("analysis window lies outside the record");
    auto lo = std::lower_bound(t.begin(), t.end(), t_start - slack);
    auto hi = std::upper_bound(t.begin(), t.end(), t_end + slack);
    std::size_t i0 = static_cast<std::size_t>(lo - t.begin());
    std::size_t i1 = static_cast<std::size_t>(hi - t.begin());
    if (i1 > 0) --i1;
    if (i1 <= i0) throw std::invalid_argument("analysis window contains fewer than 2 samples");
    return {i0, i1};
}

// Prefix trapezoidal integral: out[k] = integral of y from t[0] to t[k].
std::vector<double> prefix_integral(const std::vector<double>& t,
                                    const std::vector<double>& y) {
    std::vector<double> p(t.size(), 0.0);
    for (std::size_t k = 1; k < t.size(); ++k)
        p[k] = p[k - 1] + 0.5 * (y[k] + y[k - 1]) * (t[k] - t[k - 1]);
    return p;
}

double interp_at(const std::vector<double>& t, const std::vector<double>& y,
                 double tq, std::size_t hint) {
    // hint points at the first sample with t[hint] >= tq (callers maintain it)
    if (hint == 0) return y.front();
    if (hint >= t.size()) return y.back();
    const double h = t[hint] - t[hint - 1];
    if (h <= 0) return y[hint];
    const double a = (tq - t[hint - 1]) / h;
    return y[hint - 1] + a * (y[hint] - y[hint - 1]);
}

}  // namespace

RippleMetrics ripple_metrics(const Waveforms& w, std::string_view channel,
                             double t_start, double t_end) {
    const auto& t = w.times;
    const auto& y = w.channel(channel);
    const auto [i0, i1] = window_indices(t, t_start, t_end);
    const std::size_t n = i1 - i0 + 1;
    const double span = t[i1] - t[i0];

    RippleMetrics m;
    m.t_start = t[i0];
    m.t_end = t[i1];
    m.mean = kernels::trapezoid(t.data() + i0, y.data() + i0, n) / span;
    const auto mm = kernels::minmax(y.data() + i0, n);
    m.ripple_pp = mm.max - mm.min;
    m.ripple_rms = std::sqrt(
        kernels::trapezoid_sq_dev(t.data() + i0, y.data() + i0, m.mean, n) / span);
    return m;
}

std::string append_difference(Waveforms& w, std::string_view a,
                              std::string_view b) {
    const auto& va = w.channel(a);
    const auto& vb = w.channel(b);
    std::vector<double> d(va);
    kernels::axpy(d.data(), vb.data(), -1.0, d.size());
    std::string name = std::string(a) + "-" + std::string(b);
    for (std::size_t k = 0; k < w.names.size(); ++k) {
        if (w.names[k] == name) {
            w.data[k] = std::move(d);
            return name;
        }
    }
    w.names.push_back(name);
    w.data.push_back(std::move(d));
    return name;
}

std::optional<double> settling_time(const Waveforms& w, std::string_view channel,
                                    double band_frac, double avg_window) {
    const auto& t = w.times;
    const auto& y = w.channel(channel);
    if (t.size() < 2) throw std::invalid_argument("settling_time: record too short");
    if (band_frac <= 0) throw std::invalid_argument("settling_time: band_frac must be positive");

    const auto p = prefix_integral(t, y);
    const double span = t.back() - t.front();

    // Final value: time-weighted mean of the last 10% of the record.
    const double t_tail = t.back() - 0.1 * span;
    auto tail = std::lower_bound(t.begin(), t.end(), t_tail);
    if (tail == t.end()) --tail;
    std::size_t k_tail = static_cast<std::size_t>(tail - t.begin());
    if (k_tail + 1 >= t.size()) k_tail = t.size() - 2;
    const double p_tail = interp_at(t, p, t_tail, k_tail == 0 ? 1 : k_tail);
    const double final_v = (p.back() - p_tail) / (t.back() - t_tail);
    const double band = band_frac * std::fabs(final_v);

    // Smoothed signal value at sample k: trailing average over avg_window
    // (grows from the record start until a full window is available).
    std::size_t lo = 0;  // first sample with t[lo] >= t[k] - avg_window
    std::vector<double> smooth(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (avg_window <= 0) {
            smooth[k] = y[k];
            continue;
        }
        const double t0 = t[k] - avg_window;
        while (lo < k && t[lo] < t0) ++lo;
        if (t0 <= t.front() || lo == 0) {
            smooth[k] = k == 0 ? y[0] : (p[k] - p[0]) / (t[k] - t[0]);
        } else {
            const double p0 = interp_at(t, p, t0, lo);
            smooth[k] = (p[k] - p0) / (t[k] - t0);
        }
    }

    std::size_t last_outside = t.size();  // sentinel: none
    for (std::size_t k = t.size(); k-- > 0;) {
        if (std::fabs(smooth[k] - final_v) > band) {
            last_outside = k;
            break;
        }
    }
    if (last_outside == t.size()) return t.front();
    if (last_outside + 1 >= t.size()) return std::nullopt;  // still outside at the end
    return t[last_outside + 1];
}

Spectrum compute_spectrum(const Waveforms& w, std::string_view channel,
                          WindowKind window, double t_start) {
    constexpr std::size_t kMinFft = std::size_t{1} << 12;
    constexpr std::size_t kMaxFft = std::size_t{1} << 18;

    const auto& t = w.times;
    const auto& y = w.channel(channel);
    if (t.size() < 2) throw std::invalid_argument("compute_spectrum: record too short");
    if (t_start < t.front()) t_start = t.front();
    if (t_start >= t.back())
        throw std::invalid_argument("compute_spectrum: t_start beyond record end");

    auto first = std::lower_bound(t.begin(), t.end(), t_start);
    const std::size_t i0 = std::min(static_cast<std::size_t>(first - t.begin()),
                                    t.size() - 2);

    // Median recorded step over the analysis segment.
    std::vector<double> steps;
    steps.reserve(t.size() - i0 - 1);
    for (std::size_t k = i0 + 1; k < t.size(); ++k) steps.push_back(t[k] - t[k - 1]);
    std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
    const double h = steps[steps.size() / 2];
    if (h <= 0) throw std::invalid_argument("compute_spectrum: degenerate time axis");

    const double span = t.back() - t[i0];
    const std::size_t avail = static_cast<std::size_t>(span / h) + 1;
    std::size_t n = 1;
    while (n * 2 <= avail && n < kMaxFft) n *= 2;
    if (n < kMinFft)
        throw std::invalid_argument(
            "compute_spectrum: segment too short (" + std::to_string(avail) +
            " resampled points, need " + std::to_string(kMinFft) + ")");

    // Resample the trailing n points, grid ending exactly at the record end.
    const double g0 = t.back() - static_cast<double>(n - 1) * h;
    std::vector<double> re(n), im(n, 0.0);
    std::size_t cur = i0 + 1;
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double tq = g0 + static_cast<double>(k) * h;
        while (cur < t.size() - 1 && t[cur] < tq) ++cur;
        re[k] = interp_at(t, y, tq, cur);
        mean += re[k];
    }
    mean /= static_cast<double>(n);

    double cg = 1.0;  // coherent gain of the window
    if (window == WindowKind::Hann) {
        cg = 0.5;
        const double wstep = 2.0 * std::numbers::pi / static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k)
            re[k] = (re[k] - mean) * 0.5 * (1.0 - std::cos(wstep * static_cast<double>(k)));
    } else {
        for (std::size_t k = 0; k < n; ++k) re[k] -= mean;
    }

    fft_forward(re, im);

    Spectrum s;
    s.window = window;
    s.resolution = 1.0 / (static_cast<double>(n) * h);
    const std::size_t half = n / 2;
    s.freqs.resize(half + 1);
    s.amplitudes.resize(half + 1);
    kernels::complex_mag(re.data(), im.data(), s.amplitudes.data(), half + 1);
    const double scale = 2.0 / (static_cast<double>(n) * cg);
    for (std::size_t k = 0; k <= half; ++k) {
        s.freqs[k] = static_cast<double>(k) * s.resolution;
        s.amplitudes[k] *= scale;
    }
    s.amplitudes[0] = std::fabs(mean);     // detrended DC restored
    s.amplitudes[half] *= 0.5;             // Nyquist bin is not mirrored
    return s;
}

PortSpectra lisn_port_spectrum(const Waveforms& w, double t_start) {
    if (!w.has_channel("v(lisnp_port)"))
        throw std::invalid_argument(
            "lisn_port_spectrum: channel v(lisnp_port) missing (no LISN in the run)");
    if (t_start < 0)
        t_start = w.times.front() + 0.25 * (w.times.back() - w.times.front());
    PortSpectra ps;
    ps.positive = compute_spectrum(w, "v(lisnp_port)", WindowKind::Hann, t_start);
    if (w.has_channel("v(lisnn_port)"))
        ps.negative = compute_spectrum(w, "v(lisnn_port)", WindowKind::Hann, t_start);
    return ps;
}

AttenuationRecord spectrum_attenuation(const Spectrum& a, const Spectrum& b) {
    constexpr double kFloor = 1e-12;
    if (a.freqs.empty() || b.freqs.empty())
        throw std::invalid_argument("spectrum_attenuation: empty spectrum");

    AttenuationRecord rec;
    rec.freqs = a.freqs;
    rec.db.resize(a.freqs.size());

    const bool same_grid =
        a.freqs.size() == b.freqs.size() &&
        std::fabs(a.resolution - b.resolution) <= 1e-9 * a.resolution;
    if (!same_grid) {
        if (a.freqs.front() > b.freqs.back() || b.freqs.front() > a.freqs.back())
            throw std::invalid_argument("spectrum_attenuation: frequency ranges are disjoint");
        rec.rebinned = true;
    }

    std::size_t hint = 1;
    for (std::size_t k = 0; k < a.freqs.size(); ++k) {
        double bv;
        if (same_grid) {
            bv = b.amplitudes[k];
        } else {
            const double f = a.freqs[k];
            if (f <= b.freqs.front()) {
                bv = b.amplitudes.front();
            } else if (f >= b.freqs.back()) {
                bv = b.amplitudes.back();
            } else {
                while (hint < b.freqs.size() && b.freqs[hint] < f) ++hint;
                bv = interp_at(b.freqs, b.amplitudes, f, hint);
            }
        }
        const double av = std::max(a.amplitudes[k], kFloor);
        rec.db[k] = 20.0 * std::log10(av / std::max(bv, kFloor));
    }
    return rec;
}

EnergyBalance energy_balance(const Circuit& c, const Waveforms& w) {
    const auto& t = w.times;
    if (t.size() < 2) throw std::invalid_argument("energy_balance: record too short");
    const std::size_t n = t.size();

    auto node_v = [&](const std::string& node) -> std::vector<double> {
        if (node == "0") return std::vector<double>(n, 0.0);
        return w.channel("v(" + node + ")");  // copy; records here are modest
    };

    EnergyBalance eb;
    std::vector<double> p(n);
    for (const auto& d : c.devices) {
        const auto va = node_v(d.a);
        const auto vb = node_v(d.b);
        std::vector<double> vab(n);
        for (std::size_t k = 0; k < n; ++k) vab[k] = va[k] - vb[k];

        double e_diss = 0.0;
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, Resistor>) {
                    for (std::size_t k = 0; k < n; ++k) p[k] = vab[k] * vab[k] / m.value;
                    e_diss = kernels::trapezoid(t.data(), p.data(), n);
                } else if constexpr (std::is_same_v<T, Capacitor>) {
                    if (m.esr > 0) {
                        // Reconstruct the internal capacitor voltage through
                        // the esr with a backward-Euler recursion, then the
                        // branch current from its increments.
                        double vc = vab[0];
                        double e = 0.0, p_prev = 0.0;
                        for (std::size_t k = 1; k < n; ++k) {
                            const double dt = t[k] - t[k - 1];
                            const double tau = m.esr * m.value;
                            const double vcn = (vab[k] * dt + tau * vc) / (dt + tau);
                            const double i = m.value * (vcn - vc) / dt;
                            const double pk = m.esr * i * i;
                            e += 0.5 * (p_prev + pk) * dt;
                            p_prev = pk;
                            vc = vcn;
                        }
                        e_diss = e;
                        eb.e_stored_delta += 0.5 * m.value * (vc * vc - vab[0] * vab[0]);
                    } else {
                        eb.e_stored_delta +=
                            0.5 * m.value * (vab[n - 1] * vab[n - 1] - vab[0] * vab[0]);
                    }
                } else if constexpr (std::is_same_v<T, Inductor>) {
                    const auto& i = w.channel("i(" + d.name + ")");
                    eb.e_stored_delta +=
                        0.5 * m.value * (i[n - 1] * i[n - 1] - i[0] * i[0]);
                    if (m.esr > 0) {
                        for (std::size_t k = 0; k < n; ++k) p[k] = m.esr * i[k] * i[k];
                        e_diss = kernels::trapezoid(t.data(), p.data(), n);
                    }
                    if (m.epc > 0)
                        eb.e_stored_delta +=
                            0.5 * m.epc * (vab[n - 1] * vab[n - 1] - vab[0] * vab[0]);
                } else if constexpr (std::is_same_v<T, Diode>) {
                    for (std::size_t k = 0; k < n; ++k)
                        p[k] = vab[k] * diode_eval(m, vab[k]).i;
                    e_diss = kernels::trapezoid(t.data(), p.data(), n);
                } else if constexpr (std::is_same_v<T, Switch>) {
                    // The sample at k is the converged solution of the step
                    // ending there, so its power pairs that step's average
                    // conductance (exact mean of 1/r, even across ramp
                    // slices) with the step-end voltage.  Anything else
                    // misreads the commutation edges, where conductance
                    // swings decades within one step.
                    double p_prev =
                        vab[0] * vab[0] * switch_conductance_avg(m, t[0], t[0]);
                    e_diss = 0.0;
                    for (std::size_t k = 1; k < n; ++k) {
                        const double pk =
                            vab[k] * vab[k] *
                            switch_conductance_avg(m, t[k - 1], t[k]);
                        e_diss += 0.5 * (p_prev + pk) * (t[k] - t[k - 1]);
                        p_prev = pk;
                    }
                } else if constexpr (std::is_same_v<T, VSource>) {
                    const auto& i = w.channel("i(" + d.name + ")");
                    for (std::size_t k = 0; k < n; ++k) p[k] = -m.dc * i[k];
                    eb.e_source += kernels::trapezoid(t.data(), p.data(), n);
                    if (m.rs > 0) {
                        for (std::size_t k = 0; k < n; ++k) p[k] = m.rs * i[k] * i[k];
                        e_diss = kernels::trapezoid(t.data(), p.data(), n);
                    }
                    if (m.ls > 0)
                        eb.e_stored_delta +=
                            0.5 * m.ls * (i[n - 1] * i[n - 1] - i[0] * i[0]);
                }
            },
            d.model);

        if (e_diss != 0.0) {
            eb.dissipated_by_device[d.name] = e_diss;
            if (d.name == "rload")
                eb.e_load += e_diss;
            else
                eb.e_dissipated += e_diss;
        }
    }

    const double balance =
        eb.e_source - eb.e_load - eb.e_dissipated - eb.e_stored_delta;
    eb.residual_frac = std::fabs(balance) / std::max(std::fabs(eb.e_source), 1e-30);
    return eb;
}

ComplianceResult ripple_compliance(const RippleMetrics& m, double limit_low,
                                   double limit_high) {
    ComplianceResult r;
    r.pass_strict = m.ripple_pp <= limit_low;
    r.pass_loose = m.ripple_pp <= limit_high;
    return r;
}

double spectrum_peak(const Spectrum& s, double f, double tol_bins) {
    if (s.resolution <= 0 || s.amplitudes.empty())
        throw std::invalid_argument("spectrum_peak: empty spectrum");
    const double kf = f / s.resolution;
    const long lo = std::max(0L, static_cast<long>(std::floor(kf - tol_bins)));
    const long hi = std::min(static_cast<long>(s.amplitudes.size()) - 1,
                             static_cast<long>(std::ceil(kf + tol_bins)));
    if (lo > hi) throw std::invalid_argument("spectrum_peak: frequency outside spectrum");
    double best = 0.0;
    for (long k = lo; k <= hi; ++k) best = std::max(best, s.amplitudes[k]);
    return best;
}

double band_mean_attenuation(const Spectrum& a, const Spectrum& b, double f_lo,
                             double f_hi, double signal_floor) {
    const auto rec = spectrum_attenuation(a, b);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < rec.freqs.size(); ++k) {
        if (rec.freqs[k] < f_lo || rec.freqs[k] > f_hi) continue;
        if (a.amplitudes[k] < signal_floor) continue;
        sum += rec.db[k];
        ++count;
    }
    if (count == 0)
        throw std::invalid_argument("band_mean_attenuation: no signal bins in band");
    return sum / static_cast<double>(count);
}

double transfer_ratio(const Waveforms& w, std::string_view in_channel,
                      std::string_view out_channel, double f, double t_start,
                      WindowKind window) {
    const Spectrum si = compute_spectrum(w, in_channel, window, t_start);
    const Spectrum so = compute_spectrum(w, out_channel, window, t_start);
    const double ai = spectrum_peak(si, f, 1.0);
    const double ao = spectrum_peak(so, f, 1.0);
    if (ai <= 0) throw std::invalid_argument("transfer_ratio: no drive amplitude at f");
    return ao / ai;
}

}  // namespace smpsim
