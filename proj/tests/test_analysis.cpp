#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "smpsim/analysis.hpp"
#include "smpsim/engine.hpp"
#include "smpsim/io.hpp"
#include "smpsim/netlist.hpp"

using namespace smpsim;

namespace {

/// Uniformly sampled single-channel record built from a lambda.
template <typename F>
Waveforms synth(const std::string& name, double dt, std::size_t n, F f) {
    Waveforms w;
    w.times.resize(n);
    w.names = {name};
    w.data.resize(1);
    w.data[0].resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        w.times[k] = k * dt;
        w.data[0][k] = f(w.times[k]);
    }
    return w;
}

Spectrum flat_spectrum(double res, std::size_t bins, double amp) {
    Spectrum s;
    s.resolution = res;
    s.window = WindowKind::Rect;
    s.freqs.resize(bins);
    s.amplitudes.assign(bins, amp);
    for (std::size_t k = 0; k < bins; ++k) s.freqs[k] = k * res;
    return s;
}

}  // namespace

TEST_CASE("ripple_metrics reads a triangle wave exactly") {
    // 1 V offset, +-0.25 V symmetric triangle at 1 kHz, corner-aligned grid.
    const double A = 0.25, T = 1e-3;
    auto tri = [&](double t) {
        const double x = t / T - std::floor(t / T);
        return 1.0 + A * (x < 0.5 ? 4.0 * x - 1.0 : 3.0 - 4.0 * x);
    };
    const Waveforms w = synth("v(out)", T / 64, 64 * 20 + 1, tri);

    const RippleMetrics m = ripple_metrics(w, "v(out)", 0.0, 20 * T);
    CHECK(m.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.ripple_pp == doctest::Approx(2 * A).epsilon(1e-12));
    CHECK(m.ripple_rms == doctest::Approx(A / std::sqrt(3.0)).epsilon(1e-3));
    CHECK(m.t_start == doctest::Approx(0.0));
    CHECK(m.t_end == doctest::Approx(20 * T));

    // Sub-window of whole periods sees the same signal.
    const RippleMetrics m2 = ripple_metrics(w, "v(out)", 5 * T, 15 * T);
    CHECK(m2.mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m2.ripple_pp == doctest::Approx(2 * A).epsilon(1e-12));

    // Windows outside the record are rejected.
    CHECK_THROWS((void)ripple_metrics(w, "v(out)", -1.0, 1e-3));
    CHECK_THROWS((void)ripple_metrics(w, "v(out)", 0.0, 1.0));
}

TEST_CASE("ripple metrics are invariant under a dc shift") {
    const double T = 1e-3;
    Waveforms w = synth("a", T / 64, 64 * 10 + 1, [&](double t) {
        return 0.1 * std::sin(2 * M_PI * t / T);
    });
    w.names.push_back("b");
    w.data.push_back(w.data[0]);
    for (auto& v : w.data[1]) v += 3.0;

    const RippleMetrics ma = ripple_metrics(w, "a", 0.0, 10 * T);
    const RippleMetrics mb = ripple_metrics(w, "b", 0.0, 10 * T);
    CHECK(mb.mean == doctest::Approx(ma.mean + 3.0).epsilon(1e-12));
    CHECK(mb.ripple_pp == doctest::Approx(ma.ripple_pp).epsilon(1e-12));
    CHECK(mb.ripple_rms == doctest::Approx(ma.ripple_rms).epsilon(1e-9));
}

TEST_CASE("append_difference adds the sample-wise channel a-b") {
    Waveforms w = synth("x", 1e-6, 100, [](double t) { return 2.0 + 1e3 * t; });
    w.names.push_back("y");
    w.data.push_back(std::vector<double>(100, 0.5));

    const std::string name = append_difference(w, "x", "y");
    CHECK(name == "x-y");
    REQUIRE(w.has_channel("x-y"));
    const auto& d = w.channel("x-y");
    for (std::size_t k = 0; k < d.size(); ++k)
        CHECK(d[k] == doctest::Approx(w.data[0][k] - 0.5).epsilon(1e-15));

    // Means subtract.
    const double m_x = ripple_metrics(w, "x", 0, 99e-6).mean;
    const double m_d = ripple_metrics(w, "x-y", 0, 99e-6).mean;
    CHECK(m_d == doctest::Approx(m_x - 0.5).epsilon(1e-12));

    // Re-appending replaces rather than duplicating.
    const std::size_t n_before = w.names.size();
    (void)append_difference(w, "x", "y");
    CHECK(w.names.size() == n_before);

    // A channel minus itself is identically zero.
    (void)append_difference(w, "x", "x");
    for (double v : w.channel("x-x")) CHECK(v == 0.0);
}

TEST_CASE("settling_time matches the exponential-entry oracle") {
    // v = 1 - exp(-t/tau): with final read off the record tail, the 2% band
    // entry sits at tau * ln(1 / 0.0201) = 3.908 tau.
    const double tau = 1e-3;
    const Waveforms w = synth("v", tau / 1000, 10000 + 1, [&](double t) {
        return 1.0 - std::exp(-t / tau);
    });
    const auto ts = settling_time(w, "v", 0.02, 0.0);
    REQUIRE(ts.has_value());
    CHECK(*ts == doctest::Approx(3.908 * tau).epsilon(0.005));

    // A constant channel settles immediately.
    const Waveforms flat = synth("v", 1e-6, 100, [](double) { return 5.0; });
    const auto t0 = settling_time(flat, "v", 0.02, 0.0);
    REQUIRE(t0.has_value());
    CHECK(*t0 == doctest::Approx(0.0));

    CHECK_THROWS((void)settling_time(w, "v", -0.1, 0.0));
}

TEST_CASE("the averaging window rides over sustained ripple") {
    // Same exponential plus a 20 kHz ripple larger than the band: pointwise
    // the signal never stays inside, averaged over one ripple period the
    // entry time is the exponential's own (plus half the window).  The
    // record deliberately ends near a ripple crest, outside the band.
    const double tau = 1e-3, T_r = 50e-6;
    const Waveforms w = synth("v", 1e-6, 10012 + 1, [&](double t) {
        return 1.0 - std::exp(-t / tau) + 0.05 * std::sin(2 * M_PI * t / T_r);
    });
    CHECK_FALSE(settling_time(w, "v", 0.02, 0.0).has_value());
    const auto ts = settling_time(w, "v", 0.02, T_r);
    REQUIRE(ts.has_value());
    CHECK(*ts == doctest::Approx(3.908 * tau + T_r / 2).epsilon(0.02));
}

TEST_CASE("compute_spectrum recovers a bin-centered tone") {
    // 8192 uniform samples -> 4096-point analysis grid; put the tone exactly
    // on bin 300 so leakage vanishes for both windows.
    const double h = 1e-6;
    const std::size_t total = 8192;
    const double res = 1.0 / (4096 * h);
    const double f0 = 300 * res;
    const double dc = 1.5, amp = 0.8;
    const Waveforms w = synth("v", h, total, [&](double t) {
        return dc + amp * std::sin(2 * M_PI * f0 * t);
    });

    for (WindowKind wk : {WindowKind::Rect, WindowKind::Hann}) {
        const Spectrum s = compute_spectrum(w, "v", wk, 0.0);
        CHECK(s.resolution == doctest::Approx(res).epsilon(1e-12));
        CHECK(s.freqs.size() == 4096 / 2 + 1);
        CHECK(s.amplitudes[0] == doctest::Approx(dc).epsilon(1e-9));
        CHECK(spectrum_peak(s, f0) == doctest::Approx(amp).epsilon(0.01));
        // Away from the tone and dc the spectrum is empty.
        CHECK(spectrum_peak(s, 100 * res) < 1e-9);
    }

    // Linearity: doubling the signal doubles the tone bin.
    Waveforms w2 = w;
    for (auto& v : w2.data[0]) v = dc + 2.0 * (v - dc);
    const Spectrum s2 = compute_spectrum(w2, "v", WindowKind::Hann, 0.0);
    CHECK(spectrum_peak(s2, f0) == doctest::Approx(2 * amp).epsilon(0.01));

    CHECK_THROWS((void)compute_spectrum(w, "v", WindowKind::Hann, 1.0));
    const Waveforms tiny = synth("v", h, 100, [](double) { return 0.0; });
    CHECK_THROWS((void)compute_spectrum(tiny, "v", WindowKind::Rect, 0.0));
}

TEST_CASE("rect spectrum satisfies parseval within 1 percent") {
    const double h = 1e-6;
    const std::size_t total = 8192, n = 4096;
    const double res = 1.0 / (n * h);
    const Waveforms w = synth("v", h, total, [&](double t) {
        return 1.5 + 0.8 * std::sin(2 * M_PI * 300 * res * t) +
               0.2 * std::sin(2 * M_PI * 1234 * res * t + 0.7);
    });
    const Spectrum s = compute_spectrum(w, "v", WindowKind::Rect, 0.0);

    // Sum of bin powers: dc squared, half the amplitude square per interior
    // bin, the (pre-halved) Nyquist bin squared.
    double p_bins = s.amplitudes[0] * s.amplitudes[0];
    for (std::size_t k = 1; k + 1 < s.amplitudes.size(); ++k)
        p_bins += 0.5 * s.amplitudes[k] * s.amplitudes[k];
    p_bins += s.amplitudes.back() * s.amplitudes.back();

    // Mean square of the signal over the same trailing grid.
    double ms = 0.0;
    for (std::size_t k = total - n; k < total; ++k)
        ms += w.data[0][k] * w.data[0][k];
    ms /= n;

    CHECK(p_bins == doctest::Approx(ms).epsilon(0.01));
}

TEST_CASE("spectrum_attenuation compares spectra bin by bin") {
    const Spectrum a = flat_spectrum(100.0, 64, 1.0);
    const Spectrum b = flat_spectrum(100.0, 64, 0.1);

    // Same spectrum: identically 0 dB, no rebinning.
    const auto same = spectrum_attenuation(a, a);
    CHECK_FALSE(same.rebinned);
    for (double db : same.db) CHECK(db == doctest::Approx(0.0));

    // Known 10x ratio: +20 dB everywhere, antisymmetric.
    const auto fwd = spectrum_attenuation(a, b);
    const auto rev = spectrum_attenuation(b, a);
    for (std::size_t k = 0; k < fwd.db.size(); ++k) {
        CHECK(fwd.db[k] == doctest::Approx(20.0).epsilon(1e-9));
        CHECK(rev.db[k] == doctest::Approx(-20.0).epsilon(1e-9));
    }

    // Mismatched grids interpolate and say so.
    const Spectrum c = flat_spectrum(150.0, 48, 0.1);
    const auto re = spectrum_attenuation(a, c);
    CHECK(re.rebinned);
    CHECK(re.db[10] == doctest::Approx(20.0).epsilon(1e-9));

    // Disjoint ranges cannot be compared.
    Spectrum hi = flat_spectrum(100.0, 16, 1.0);
    for (auto& f : hi.freqs) f += 1e6;
    CHECK_THROWS((void)spectrum_attenuation(a, hi));
}

TEST_CASE("band_mean_attenuation skips bins without signal") {
    Spectrum a = flat_spectrum(100.0, 64, 1.0);
    Spectrum b = flat_spectrum(100.0, 64, 0.01);
    // Kill the reference signal in part of the band; those bins must not
    // drag the mean even though the ratio there is wild.
    for (std::size_t k = 30; k < 40; ++k) {
        a.amplitudes[k] = 1e-13;
        b.amplitudes[k] = 1e-13;
    }
    const double mean_db = band_mean_attenuation(a, b, 1000.0, 5000.0, 1e-10);
    CHECK(mean_db == doctest::Approx(40.0).epsilon(1e-6));

    // No surviving bins at all is an error, not a silent zero.
    Spectrum dead = a;
    for (auto& v : dead.amplitudes) v = 1e-13;
    CHECK_THROWS((void)band_mean_attenuation(dead, b, 1000.0, 5000.0, 1e-10));
}

TEST_CASE("spectrum_peak searches only the requested neighborhood") {
    Spectrum s = flat_spectrum(100.0, 64, 0.0);
    s.amplitudes[20] = 1.0;   // 2 kHz
    s.amplitudes[40] = 5.0;   // 4 kHz, far away
    CHECK(spectrum_peak(s, 2000.0) == doctest::Approx(1.0));
    CHECK(spectrum_peak(s, 2000.0, 25.0) == doctest::Approx(5.0));
    // Slightly off-center frequencies still find the bin.
    CHECK(spectrum_peak(s, 2080.0) == doctest::Approx(1.0));
    CHECK_THROWS((void)spectrum_peak(s, 1e9));
}

TEST_CASE("transfer_ratio reads the gain at one frequency") {
    const double h = 1e-6;
    const double res = 1.0 / (4096 * h);
    const double f0 = 500 * res;
    Waveforms w = synth("in", h, 8192, [&](double t) {
        return std::sin(2 * M_PI * f0 * t);
    });
    w.names.push_back("out");
    w.data.push_back({});
    w.data[1].resize(w.times.size());
    for (std::size_t k = 0; k < w.times.size(); ++k)
        w.data[1][k] = 0.1 * std::sin(2 * M_PI * f0 * w.times[k] - 1.0);

    CHECK(transfer_ratio(w, "in", "out", f0, 0.0) ==
          doctest::Approx(0.1).epsilon(0.01));
}

TEST_CASE("lisn_port_spectrum wants the port channel") {
    const double h = 1e-6;
    Waveforms w = synth("v(lisnp_port)", h, 16384, [&](double t) {
        return 1e-3 * std::sin(2 * M_PI * 1e4 * t);
    });
    const PortSpectra one = lisn_port_spectrum(w);
    CHECK(one.positive.freqs.size() > 0);
    CHECK_FALSE(one.negative.has_value());

    w.names.push_back("v(lisnn_port)");
    w.data.push_back(w.data[0]);
    const PortSpectra two = lisn_port_spectrum(w);
    REQUIRE(two.negative.has_value());
    CHECK(two.negative->freqs.size() == two.positive.freqs.size());

    Waveforms bare = synth("v(out)", h, 16384, [](double) { return 0.0; });
    CHECK_THROWS((void)lisn_port_spectrum(bare));
}

TEST_CASE("ripple_compliance applies the two limits") {
    RippleMetrics m;
    m.ripple_pp = 30e-6;
    CHECK(ripple_compliance(m, 50e-6, 100e-6).pass_strict);
    CHECK(ripple_compliance(m, 50e-6, 100e-6).pass_loose);
    m.ripple_pp = 70e-6;
    CHECK_FALSE(ripple_compliance(m, 50e-6, 100e-6).pass_strict);
    CHECK(ripple_compliance(m, 50e-6, 100e-6).pass_loose);
    m.ripple_pp = 200e-6;
    CHECK_FALSE(ripple_compliance(m, 50e-6, 100e-6).pass_strict);
    CHECK_FALSE(ripple_compliance(m, 50e-6, 100e-6).pass_loose);
}

TEST_CASE("energy_balance from waveforms agrees with the engine ledger") {
    Circuit c = parse_netlist(io::read_text(std::string(SMPSIM_NETLIST_DIR) +
                                            "/buck_small.cir"));
    c.directives.probes.clear();  // record everything
    const TransientResult r = transient_run(c);

    const EnergyBalance eb = energy_balance(c, r.waves);
    CHECK(eb.e_source == doctest::Approx(r.stats.energy.e_source).epsilon(1e-3));
    CHECK(eb.e_load == doctest::Approx(r.stats.energy.e_load).epsilon(1e-3));
    CHECK(eb.residual_frac < 0.01);
    CHECK(eb.e_source > 0.0);
    CHECK(eb.e_load > 0.0);
    REQUIRE(eb.dissipated_by_device.count("s1") == 1);
    CHECK(eb.dissipated_by_device.at("s1") ==
          doctest::Approx(r.stats.energy.dissipated_by_device.at("s1"))
              .epsilon(0.05));
    const double delta = r.stats.energy.e_stored_final -
                         r.stats.energy.e_stored_initial;
    CHECK(eb.e_stored_delta == doctest::Approx(delta).epsilon(1e-2));
}
