#pragma once

#include "smpsim/netlist.hpp"

// Device-level numerics: the diode model, the PWM switch timing, and the
// companion (discretized) forms of the reactive elements used by the
// integrator.  Everything here is pure arithmetic so it can be tested
// against closed forms without running a simulation.

namespace smpsim {

/// Integration rule for one step.
enum class Method { BE, TR };

/// Thermal voltage at 300 K, volts.  Fixed; no temperature sweeps here.
inline constexpr double kThermalVoltage = 0.02585;

/// Argument of the diode exponential beyond which the characteristic is
/// continued linearly (C1 at the junction) to keep Newton iterates finite.
inline constexpr double kDiodeExpClamp = 80.0;

struct DiodeEval {
    double i;  // current, anode to cathode
    double g;  // di/dv at this bias
};

/// Shockley current plus the model's fixed gmin shunt:
///   i(v) = is*(exp(v/(n*vt)) - 1) + gmin*v
/// with the exponential continued linearly above kDiodeExpClamp.
DiodeEval diode_eval(const Diode& d, double v);

/// Instantaneous switch conductance at absolute time t.  The gate pattern
/// per period (after subtracting phase) is: rise ramp [0,trise), on until
/// duty*T, fall ramp [duty*T, duty*T+tfall), off for the rest.  t = 0 with
/// trise = 0 is on; the ramps interpolate log-linearly in resistance, so
/// the midpoint resistance is sqrt(ron*roff).
double switch_conductance(const Switch& s, double t);

/// Average conductance over [t0, t1], exact for the log-linear ramps:
/// within a ramp the mean of 1/r(t) has a closed form, and the charge a
/// step transfers is g_avg * v * dt rather than a point sample.  The
/// interval must lie inside one pwm regime (the simulator's breakpoint
/// schedule guarantees that); t1 <= t0 degenerates to the point sample.
double switch_conductance_avg(const Switch& s, double t0, double t1);

/// Equivalent parallel capacitance that puts the self-resonance of
/// inductance l at f_res:  epc = 1 / ((2*pi*f_res)^2 * l).
double epc_from_resonance(double l, double f_res);

/// Norton companion of a (series-esr) capacitor for one step of size dt:
/// the device stamps conductance g between its terminals and a current
/// source i_hist flowing b -> a.  After the solve the branch current is
/// i = g*v_ab - i_hist.
struct NortonCompanion {
    double g;
    double i_hist;
};
/// v_prev is the internal capacitor voltage, i_prev the branch current at
/// the previous accepted time point (i_prev only matters for TR).
NortonCompanion cap_companion(double c, double esr, Method m, double dt,
                              double v_prev, double i_prev);

/// Branch companion of an inductor (or source inductance):  the branch row
/// reads  v_a - v_b - r_eq * i = e_hist.  r_eq for TR is 2L/dt + esr.
struct BranchCompanion {
    double r_eq;
    double e_hist;
};
/// v_l_prev is the inductive part of the previous branch voltage (excludes
/// the esr drop); only TR uses it.
BranchCompanion ind_companion(double l, double esr, Method m, double dt,
                              double i_prev, double v_l_prev);

}  // namespace smpsim
