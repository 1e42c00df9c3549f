#pragma once

/// Parametric constructors for the buck-converter noise study: the ideal
/// converter plus a chain of cumulative refinements, each a pure
/// Circuit -> Circuit transformation:
///
///   phase1  ideal buck (ideal switch edges, near-ideal diode)
///   phase2  + device non-idealities (diode drop, switch ramps, ESR, EPC)
///   phase3  + output LC filter (load moves to node vout_f)
///   phase4  + RC snubber on the switching node
///   phase5  + source lead impedance (rs/ls inside the source)
///   phase6  + LISN on both rails and an input pi filter
///
/// Node names the transformations introduce are part of the contract:
/// `vout_f` (post-filter output), `lisnp_port` / `lisnn_port` (measurement
/// ports). Every constructor returns a circuit that passes
/// validate_circuit with no findings and carries .tran/.ic directives, so
/// it can be handed straight to transient_run.

#include "smpsim/devices.hpp"
#include "smpsim/netlist.hpp"

namespace smpsim {

/// Power-stage parameters. Defaults give continuous conduction with a
/// comfortably resolvable ripple: 5 V / 1 A output from a 10 V input.
struct BuckParams {
    double vin = 10.0;
    double fsw = 1e5;       // switching frequency, Hz
    double duty = 0.5;
    double l_main = 100e-6;
    double c_out = 100e-6;
    double r_load = 5.0;
    double c_in = 10e-6;    // input capacitor across the source
};

/// Device non-idealities applied by apply_nonidealities. l_epc < 0 derives
/// the inductor's parallel capacitance from its self-resonance frequency.
struct NonIdealParams {
    Diode diode{0.05, 1.0, 1e-12};
    double trise = 20e-9;
    double tfall = 20e-9;
    double l_esr = 0.05;
    double l_epc = -1.0;          // farads, or < 0 for auto
    double l_resonance = 100e6;   // Hz, used when l_epc < 0
    double c_esr = 0.01;
};

/// Line-impedance stabilization network values (a standard 50 uH / 50 ohm
/// conducted-emissions port). The port nodes are `lisnp_port` and, with
/// both rails, `lisnn_port`.
struct LisnParams {
    enum class Rails { Positive, Negative, Both };
    double l_lisn = 50e-6;
    double c_coupling = 0.1e-6;  // series capacitor into the port resistor
    double c_bulk = 1e-6;        // source-side bulk capacitor
    double r_damp = 5.0;         // in series with c_bulk
    double r_port = 50.0;        // measurement resistor
    Rails rails = Rails::Both;
    double c_earth = 100e-12;    // converter-ground-to-earth parasitic (Both)
};

/// Ideal buck: source, input capacitor, PWM switch, freewheel diode at the
/// switching node, main inductor, output capacitor and load. Rejects
/// parameter sets that would leave continuous conduction.
Circuit build_buck_ideal(const BuckParams& p = {});

/// Switch ramps, diode model, inductor esr/epc, output capacitor esr.
/// All-ideal parameters reproduce the input circuit exactly.
Circuit apply_nonidealities(Circuit c, const NonIdealParams& p = {});

/// Series l then shunt cap between the output node and new node vout_f;
/// the load moves to vout_f.
Circuit add_output_lc_filter(Circuit c, double l = 1e-6, double cap = 10e-6);

/// Series RC from the switching node to ground. The parameterless form
/// sizes r to the ring's characteristic impedance sqrt(l_main/epc) and
/// cap to 3x the inductor's parallel capacitance.
Circuit add_snubber(Circuit c, double r, double cap);
Circuit add_snubber(Circuit c);

/// Resistance and inductance inside the source's positive lead.
Circuit add_source_leads(Circuit c, double rs = 0.1, double ls = 1e-6);

/// LISN between source and converter: series l_lisn toward the source,
/// coupling-capacitor-plus-port-resistor on the converter side, bulk
/// RC on the source side. With Rails::Both the converter ground lifts
/// to a new node (`ncvt`) tied to earth through the negative-rail LISN
/// and the c_earth parasitic.
Circuit add_lisn(Circuit c, const LisnParams& p = {});

/// C-L-C network between the LISN's converter-side terminal and the
/// converter input (new node `piin`).
Circuit add_input_pi_filter(Circuit c, double l = 10e-6, double c1 = 10e-6,
                            double c2 = 10e-6);

/// Cumulative presets 1..6 as listed above, with .tran/.ic directives
/// (2 ms stop; 50 ns step for phase 1, 0.5 ns for the rest).
Circuit phase_preset(int n, const BuckParams& p = {});

}  // namespace smpsim
