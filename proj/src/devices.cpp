#include "smpsim/devices.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smpsim {

DiodeEval diode_eval(const Diode& d, double v) {
    const double nvt = d.ideality * kThermalVoltage;
    const double x = v / nvt;
    double i, g;
    if (x <= kDiodeExpClamp) {
        const double e = std::exp(x);
        i = d.is_sat * (e - 1.0);
        g = d.is_sat * e / nvt;
    } else {
        // Linear continuation: value and slope match at the clamp point.
        const double e = std::exp(kDiodeExpClamp);
        i = d.is_sat * (e * (1.0 + (x - kDiodeExpClamp)) - 1.0);
        g = d.is_sat * e / nvt;
    }
    return {i + d.gmin * v, g + d.gmin};
}

double switch_conductance(const Switch& s, double t) {
    const PwmControl& c = s.ctrl;
    const double u = (t - c.phase) * c.freq;
    double frac = u - std::floor(u);  // position in the period, [0,1)
    // Comparisons below get a one-ulp cushion so samples landing exactly on
    // a corner (breakpoint snapping guarantees some do) pick the intended
    // side regardless of rounding in the reduction above.
    const double eps = 4e-16;
    const double f_rise = c.trise * c.freq;
    const double f_on = c.duty;
    const double f_fall = f_on + c.tfall * c.freq;
    const double log_on = std::log(s.ron);
    const double log_off = std::log(s.roff);
    double r;
    if (frac < f_rise - eps) {
        r = std::exp(log_off + (log_on - log_off) * (frac / f_rise));
    } else if (frac < f_on + eps) {
        r = s.ron;
    } else if (frac < f_fall - eps) {
        r = std::exp(log_on + (log_off - log_on) * ((frac - f_on) / (c.tfall * c.freq)));
    } else {
        r = s.roff;
    }
    return 1.0 / r;
}

double switch_conductance_avg(const Switch& s, double t0, double t1) {
    if (!(t1 > t0)) return switch_conductance(s, t1);
    const PwmControl& c = s.ctrl;
    const double tm = 0.5 * (t0 + t1);
    const double um = (tm - c.phase) * c.freq;
    const double p = std::floor(um);
    const double fm = um - p;  // midpoint position classifies the regime
    const double eps = 4e-16;
    const double f_rise = c.trise * c.freq;
    const double f_on = c.duty;
    const double f_fall = f_on + c.tfall * c.freq;
    double lo, hi, la, lb;  // ramp span in frac; log-resistance endpoints
    if (fm < f_rise - eps) {
        lo = 0.0;
        hi = f_rise;
        la = std::log(s.roff);
        lb = std::log(s.ron);
    } else if (fm < f_on + eps) {
        return 1.0 / s.ron;
    } else if (fm < f_fall - eps) {
        lo = f_on;
        hi = f_fall;
        la = std::log(s.ron);
        lb = std::log(s.roff);
    } else {
        return 1.0 / s.roff;
    }
    // Step endpoints in the midpoint's period, clamped onto the ramp so
    // corner samples that round to a neighbouring regime stay harmless.
    const double f0 = (t0 - c.phase) * c.freq - p;
    const double f1 = (t1 - c.phase) * c.freq - p;
    const double x0 = std::clamp((f0 - lo) / (hi - lo), 0.0, 1.0);
    const double x1 = std::clamp((f1 - lo) / (hi - lo), 0.0, 1.0);
    const double dl = lb - la;
    const double xm = std::clamp((fm - lo) / (hi - lo), 0.0, 1.0);
    if (x1 - x0 < 1e-12 || std::fabs(dl) < 1e-12)
        return std::exp(-(la + dl * xm));
    // g(x) = exp(-(la + dl*x)), so the running integral is -g/dl.
    const double g0 = std::exp(-(la + dl * x0));
    const double g1 = std::exp(-(la + dl * x1));
    return (g0 - g1) / (dl * (x1 - x0));
}

double epc_from_resonance(double l, double f_res) {
    if (l <= 0 || f_res <= 0)
        throw std::invalid_argument("epc_from_resonance needs positive l and f_res");
    const double w = 2.0 * M_PI * f_res;
    return 1.0 / (w * w * l);
}

NortonCompanion cap_companion(double c, double esr, Method m, double dt,
                              double v_prev, double i_prev) {
    // Ideal-capacitor companion: i = geq*v_c - ih.  Folding the series esr
    // (v_ab = esr*i + v_c) rescales both by 1/(1 + geq*esr).
    const double geq = (m == Method::TR ? 2.0 : 1.0) * c / dt;
    const double ih = m == Method::TR ? geq * v_prev + i_prev : geq * v_prev;
    const double k = 1.0 + geq * esr;
    return {geq / k, ih / k};
}

BranchCompanion ind_companion(double l, double esr, Method m, double dt,
                              double i_prev, double v_l_prev) {
    const double req = (m == Method::TR ? 2.0 : 1.0) * l / dt;
    const double eh = m == Method::TR ? -req * i_prev - v_l_prev : -req * i_prev;
    return {req + esr, eh};
}

}  // namespace smpsim
