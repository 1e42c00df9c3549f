#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "smpsim/analysis.hpp"
#include "smpsim/engine.hpp"
#include "smpsim/netlist.hpp"
#include "smpsim/scenarios.hpp"

using namespace smpsim;

namespace {

const Device* find_in(const Circuit& c, const std::string& name) {
    for (const auto& d : c.devices)
        if (d.name == name) return &d;
    return nullptr;
}

/// Complex nodal solve of the measurement network (LISN alone or LISN plus
/// pi filter, defaults everywhere, source leads 0.1 ohm + 1 uH) driven by a
/// unit voltage across the converter-side pair.  Returns the port voltage,
/// i.e. the cascade transfer function at f.  This is an independent
/// frequency-domain oracle: no engine code involved.
std::complex<double> analytic_port_gain(double f, bool with_pi) {
    using Cx = std::complex<double>;
    const Cx jw(0.0, 2.0 * M_PI * f);

    const int piin = with_pi ? 0 : -2;  // absent without the pi filter
    const int vin = with_pi ? 1 : 0;
    const int ncvt = vin + 1;
    const int psrc = vin + 2;
    const int pbulk = vin + 3;
    const int pport = vin + 4;
    const int nport = vin + 5;
    const int br = vin + 6;  // drive branch current
    const int n = br + 1;

    std::vector<Cx> a(n * n, Cx{});
    std::vector<Cx> rhs(n, Cx{});
    auto stamp = [&](int na, int nb, Cx z) {  // impedance, -1 is ground
        const Cx y = 1.0 / z;
        if (na >= 0) a[na * n + na] += y;
        if (nb >= 0) a[nb * n + nb] += y;
        if (na >= 0 && nb >= 0) {
            a[na * n + nb] -= y;
            a[nb * n + na] -= y;
        }
    };

    if (with_pi) {
        stamp(piin, vin, jw * 10e-6);               // lpi
        stamp(piin, ncvt, 1.0 / (jw * 10e-6));      // cpi2
        stamp(vin, ncvt, 0.5 + 1.0 / (jw * 10e-6)); // cpi1 with its esr
    }
    stamp(psrc, vin, jw * 50e-6);                   // llisnp
    stamp(vin, pport, 1.0 / (jw * 0.1e-6));         // ccoupp
    stamp(pport, -1, Cx{50.0});                     // rportp
    stamp(psrc, pbulk, 1.0 / (jw * 1e-6));          // cbulkp
    stamp(pbulk, -1, Cx{5.0});                      // rdampp
    stamp(psrc, -1, 0.1 + jw * 1e-6);               // source leads
    stamp(ncvt, -1, jw * 50e-6);                    // llisnn
    stamp(ncvt, nport, 1.0 / (jw * 0.1e-6));        // ccoupn
    stamp(nport, -1, Cx{50.0});                     // rportn
    stamp(ncvt, -1, 1.0 / (jw * 100e-12));          // cgnd
    // (the negative-rail bulk leg has both ends at earth and carries nothing)

    // Unit drive across the converter-side pair.
    const int hi = with_pi ? piin : vin;
    a[br * n + hi] += 1.0;
    a[br * n + ncvt] -= 1.0;
    a[hi * n + br] += 1.0;
    a[ncvt * n + br] -= 1.0;
    rhs[br] = 1.0;

    // Gaussian elimination with partial pivoting.
    std::vector<int> perm(n);
    for (int k = 0; k < n; ++k) perm[k] = k;
    for (int col = 0; col < n; ++col) {
        int best = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[best * n + col])) best = r;
        for (int k = 0; k < n; ++k) std::swap(a[col * n + k], a[best * n + k]);
        std::swap(rhs[col], rhs[best]);
        REQUIRE(std::abs(a[col * n + col]) > 0.0);
        for (int r = col + 1; r < n; ++r) {
            const Cx m = a[r * n + col] / a[col * n + col];
            if (m == Cx{}) continue;
            for (int k = col; k < n; ++k) a[r * n + k] -= m * a[col * n + k];
            rhs[r] -= m * rhs[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        Cx s = rhs[r];
        for (int k = r + 1; k < n; ++k) s -= a[r * n + k] * rhs[k];
        rhs[r] = s / a[r * n + r];
    }
    return rhs[pport];
}

/// Measurement counterpart: the same network built through the actual
/// transforms, excited by a small trapezoid-wave driver across the pair,
/// with the gain read from the spectra of the recorded differential drive
/// and port voltages.  The drive edges span 5% of the period to keep the
/// excitation band-limited, and sixty periods pass before the analysis
/// window opens: the network's least-damped mode (the source lead
/// inductance against the earth capacitance, about 16 MHz with a few
/// microseconds of decay) must be gone from the record.
double measured_port_gain(bool with_pi, double f_drive, double f_read) {
    Circuit c = parse_netlist(
        "vtest vin 0 dc=0\n"
        "rconv vin 0 100\n"
        ".tran 1m 1u\n");
    c = add_source_leads(std::move(c), 0.1, 1e-6);
    c = add_lisn(std::move(c));
    if (with_pi) c = add_input_pi_filter(std::move(c));
    const std::string hi = with_pi ? "piin" : "vin";

    const double edge = 0.05 / f_drive;
    c.devices.push_back({"vdrv", "drv", "ncvt", VSource{1.0, 10.0, 0.0}});
    c.devices.push_back(
        {"sdrv", "drv", hi,
         Switch{1.0, 1e7, PwmControl{f_drive, 0.5, edge, edge, 0.0}}});
    c.directives.probes = {{Probe::Kind::NodeVoltage, hi, ""},
                           {Probe::Kind::NodeVoltage, "ncvt", ""},
                           {Probe::Kind::NodeVoltage, "lisnp_port", ""}};

    SolverOptions opts;
    opts.tstop = 110.0 / f_drive;
    opts.dtmax = 1.0 / (200.0 * f_drive);
    TransientResult r = transient_run(c, opts);
    const std::string diff =
        append_difference(r.waves, "v(" + hi + ")", "v(ncvt)");
    return transfer_ratio(r.waves, diff, "v(lisnp_port)", f_read,
                          60.0 / f_drive);
}

}  // namespace

TEST_CASE("phase preset 1 is the plain ideal converter") {
    Circuit a = build_buck_ideal({});
    Circuit b = phase_preset(1, {});
    a.title = b.title;
    CHECK(a == b);
}

TEST_CASE("build_buck_ideal pins its operating point and validates input") {
    const BuckParams p;
    const Circuit c = build_buck_ideal(p);
    CHECK(validate_circuit(c).empty());
    REQUIRE(c.directives.tran.has_value());
    CHECK(c.directives.tran->tstop == doctest::Approx(2e-3));
    CHECK(c.directives.tran->dtmax == doctest::Approx(1.0 / (200.0 * p.fsw)));
    REQUIRE(c.directives.ics.size() == 2);
    CHECK(c.directives.ics[0].ref == "out");
    CHECK(c.directives.ics[0].value == doctest::Approx(p.duty * p.vin));
    CHECK(c.directives.ics[1].ref == "lmain");
    CHECK(c.directives.ics[1].value ==
          doctest::Approx(p.duty * p.vin / p.r_load));

    BuckParams bad = p;
    bad.duty = 0.0;
    CHECK_THROWS_AS((void)build_buck_ideal(bad), std::invalid_argument);
    bad.duty = 1.0;
    CHECK_THROWS_AS((void)build_buck_ideal(bad), std::invalid_argument);
    bad = p;
    bad.vin = -1.0;
    CHECK_THROWS_AS((void)build_buck_ideal(bad), std::invalid_argument);
    // Light load leaves continuous conduction.
    bad = p;
    bad.r_load = 500.0;
    CHECK_THROWS_AS((void)build_buck_ideal(bad), std::invalid_argument);
}

TEST_CASE("apply_nonidealities with all-ideal parameters is the identity") {
    const Circuit base = build_buck_ideal({});
    NonIdealParams ideal;
    ideal.diode = Diode{0.1, 1.0, 1e-12};  // the builder's own diode
    ideal.trise = 0.0;
    ideal.tfall = 0.0;
    ideal.l_esr = 0.0;
    ideal.l_epc = 0.0;
    ideal.c_esr = 0.0;
    CHECK(apply_nonidealities(base, ideal) == base);
}

TEST_CASE("apply_nonidealities installs the device imperfections") {
    const Circuit c = apply_nonidealities(build_buck_ideal({}), {});

    const auto& sw = std::get<Switch>(find_in(c, "s1")->model);
    CHECK(sw.ctrl.trise == doctest::Approx(20e-9));
    CHECK(sw.ctrl.tfall == doctest::Approx(20e-9));
    const auto& d = std::get<Diode>(find_in(c, "d1")->model);
    CHECK(d.is_sat == doctest::Approx(0.05));
    const auto& l = std::get<Inductor>(find_in(c, "lmain")->model);
    CHECK(l.esr == doctest::Approx(0.05));
    // Default epc comes from the 100 MHz self-resonance of the 100 uH part.
    CHECK(l.epc == doctest::Approx(epc_from_resonance(100e-6, 100e6)));
    const auto& co = std::get<Capacitor>(find_in(c, "cout")->model);
    CHECK(co.esr == doctest::Approx(0.01));

    NonIdealParams bad;
    bad.trise = -1.0;
    CHECK_THROWS_AS((void)apply_nonidealities(build_buck_ideal({}), bad),
                    std::invalid_argument);
}

TEST_CASE("add_output_lc_filter moves the load behind the new pole") {
    const Circuit c = add_output_lc_filter(build_buck_ideal({}));
    const Device* load = find_in(c, "rload");
    REQUIRE(load != nullptr);
    CHECK((load->a == "vout_f" || load->b == "vout_f"));
    const Device* lf = find_in(c, "lf");
    REQUIRE(lf != nullptr);
    CHECK(lf->a == "out");
    CHECK(lf->b == "vout_f");
    CHECK(find_in(c, "cf") != nullptr);
    CHECK(validate_circuit(c).empty());

    CHECK_THROWS_AS((void)add_output_lc_filter(build_buck_ideal({}), -1e-6, 1e-5),
                    std::invalid_argument);
}

TEST_CASE("add_snubber sizes itself from the inductor parasitics") {
    // Automatic sizing needs the epc, so the ideal circuit is rejected.
    CHECK_THROWS_AS((void)add_snubber(build_buck_ideal({})),
                    std::invalid_argument);

    const Circuit base = apply_nonidealities(build_buck_ideal({}), {});
    const Circuit c = add_snubber(base);
    const auto& l = std::get<Inductor>(find_in(base, "lmain")->model);
    const auto& r = std::get<Resistor>(find_in(c, "rsnub")->model);
    const auto& cap = std::get<Capacitor>(find_in(c, "csnub")->model);
    CHECK(r.value == doctest::Approx(std::sqrt(l.value / l.epc)));
    CHECK(cap.value == doctest::Approx(3.0 * l.epc));
    CHECK(find_in(c, "rsnub")->a == "sw");
    CHECK(validate_circuit(c).empty());

    CHECK_THROWS_AS((void)add_snubber(base, 0.0, 1e-9), std::invalid_argument);
}

TEST_CASE("add_source_leads rewrites the source impedance") {
    const Circuit c = add_source_leads(build_buck_ideal({}), 0.2, 2e-6);
    const auto& v = std::get<VSource>(find_in(c, "vsrc")->model);
    CHECK(v.rs == doctest::Approx(0.2));
    CHECK(v.ls == doctest::Approx(2e-6));

    Circuit no_src = parse_netlist("r1 a 0 10\nr2 a 0 10\n.tran 1m 1u\n");
    CHECK_THROWS_AS((void)add_source_leads(no_src, 0.1, 1e-6),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)add_source_leads(build_buck_ideal({}), -0.1, 1e-6),
                    std::invalid_argument);
}

TEST_CASE("add_lisn splits the rails per the configuration") {
    const Circuit base = build_buck_ideal({});

    const Circuit both = add_lisn(base);
    for (const char* name :
         {"llisnp", "ccoupp", "rportp", "cbulkp", "rdampp", "llisnn", "ccoupn",
          "rportn", "cbulkn", "rdampn", "cgnd"})
        CHECK(find_in(both, name) != nullptr);
    CHECK(both.has_node("ncvt"));
    CHECK(both.has_node("lisnp_port"));
    CHECK(both.has_node("lisnn_port"));
    // The converter's ground-return devices moved onto the local rail; the
    // source minus terminal stays at earth.
    CHECK(std::get<VSource>(find_in(both, "vsrc")->model).dc ==
          doctest::Approx(10.0));
    CHECK(find_in(both, "vsrc")->b == "0");
    CHECK(find_in(both, "d1")->a == "ncvt");
    CHECK(find_in(both, "rload")->b == "ncvt");
    CHECK(validate_circuit(both).empty());

    LisnParams pos;
    pos.rails = LisnParams::Rails::Positive;
    const Circuit p = add_lisn(base, pos);
    CHECK(find_in(p, "llisnp") != nullptr);
    CHECK(find_in(p, "llisnn") == nullptr);
    CHECK(find_in(p, "cgnd") == nullptr);
    CHECK_FALSE(p.has_node("ncvt"));

    LisnParams neg;
    neg.rails = LisnParams::Rails::Negative;
    const Circuit nc = add_lisn(base, neg);
    CHECK(find_in(nc, "llisnn") != nullptr);
    CHECK(find_in(nc, "llisnp") == nullptr);
    CHECK(nc.has_node("ncvt"));

    CHECK_THROWS_AS((void)add_lisn(both), std::invalid_argument);
    Circuit lifted = parse_netlist("vs a b dc=5\nr1 a b 10\n.tran 1m 1u\n");
    CHECK_THROWS_AS((void)add_lisn(lifted), std::invalid_argument);
}

TEST_CASE("add_input_pi_filter interposes between lisn and converter") {
    const Circuit base = add_lisn(build_buck_ideal({}));
    const Circuit c = add_input_pi_filter(base);

    // lpi runs from the LISN terminal to the new converter input; the
    // converter's own input devices follow it there.
    const Device* lpi = find_in(c, "lpi");
    REQUIRE(lpi != nullptr);
    CHECK(lpi->a == "vin");
    CHECK(lpi->b == "piin");
    CHECK(find_in(c, "cin")->a == "piin");
    CHECK(find_in(c, "s1")->a == "piin");
    CHECK(find_in(c, "llisnp")->b == "vin");
    const auto& cpi1 = std::get<Capacitor>(find_in(c, "cpi1")->model);
    CHECK(cpi1.esr == doctest::Approx(0.5));
    CHECK(find_in(c, "cpi2")->b == "ncvt");
    CHECK(validate_circuit(c).empty());

    CHECK_THROWS_AS((void)add_input_pi_filter(build_buck_ideal({})),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)add_input_pi_filter(base, -1e-6, 1e-5, 1e-5),
                    std::invalid_argument);
}

TEST_CASE("phase presets carry the documented structure") {
    for (int n = 1; n <= 6; ++n) {
        const Circuit c = phase_preset(n);
        CAPTURE(n);
        CHECK(validate_circuit(c).empty());
        CHECK(c.title.rfind("phase " + std::to_string(n), 0) == 0);
        REQUIRE(c.directives.tran.has_value());
        CHECK(c.directives.tran->tstop == doctest::Approx(2e-3));
        CHECK(c.directives.ics.size() == 2);
        CHECK(c.has_node("vout_f") == (n >= 3));
        CHECK((find_in(c, "rsnub") != nullptr) == (n >= 4));
        CHECK(c.has_node("lisnp_port") == (n == 6));
        CHECK(c.has_node("piin") == (n == 6));
    }

    // Step limit: 200 steps per switching period for the ideal phase, 20
    // steps per main-inductor self-resonance period once parasitics exist.
    CHECK(phase_preset(1).directives.tran->dtmax == doctest::Approx(5e-8));
    BuckParams fast;
    fast.fsw = 2e5;
    CHECK(phase_preset(1, fast).directives.tran->dtmax ==
          doctest::Approx(2.5e-8));
    for (int n = 2; n <= 6; ++n)
        CHECK(phase_preset(n).directives.tran->dtmax == doctest::Approx(5e-10));

    // The snubber added in phase 4 must follow the converter ground when
    // the LISN later lifts it.
    const Circuit p6 = phase_preset(6);
    CHECK(find_in(p6, "csnub")->b == "ncvt");
    CHECK(p6.devices.size() == 7 + 2 + 2 + 11 + 3);

    CHECK_THROWS_AS((void)phase_preset(0), std::invalid_argument);
    CHECK_THROWS_AS((void)phase_preset(7), std::invalid_argument);
}

TEST_CASE("lisn port transfer matches the analytic network response") {
    for (double f : {50e3, 150e3, 1e6}) {
        CAPTURE(f);
        const double meas = measured_port_gain(false, f, f);
        const double want = std::abs(analytic_port_gain(f, false));
        const double db = 20.0 * std::log10(meas / want);
        CHECK(std::fabs(db) <= 3.0);
    }
}

TEST_CASE("lisn plus pi filter reproduces the analytic cascade gain") {
    // 10 kHz to 10 MHz, reading the drive fundamental and third harmonic.
    const struct {
        double f_drive;
        double reads[2];
    } runs[] = {
        {10e3, {10e3, 30e3}},
        {100e3, {100e3, 300e3}},
        {1e6, {1e6, 3e6}},
        {10e6, {10e6, 0.0}},
    };
    for (const auto& run : runs) {
        for (double f : run.reads) {
            if (f == 0.0) continue;
            CAPTURE(f);
            const double meas = measured_port_gain(true, run.f_drive, f);
            const double want = std::abs(analytic_port_gain(f, true));
            const double db = 20.0 * std::log10(meas / want);
            CHECK(std::fabs(db) <= 3.0);
        }
    }
}

TEST_CASE("every preset runs two milliseconds at its own defaults") {
    for (int n = 1; n <= 6; ++n) {
        CAPTURE(n);
        const Circuit c = phase_preset(n);
        TransientResult r = transient_run(c);
        CHECK(r.waves.times.back() == doctest::Approx(2e-3));
        CHECK(r.stats.max_kcl_ratio <= 1.0);
        CHECK(r.stats.energy.residual_frac < 0.01);
        CHECK(r.stats.max_breakpoint_state_jump == doctest::Approx(0.0));
    }
}
