#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "smpsim/devices.hpp"
#include "smpsim/netlist.hpp"

// Modified nodal analysis engine: DC operating point (Newton with gmin
// stepping) and fixed-step transient analysis (trapezoidal by default,
// backward Euler on demand) with breakpoint snapping at every switch edge.

namespace smpsim {

/// Raised when Newton or the linear solve cannot make progress.
class SimulationError : public std::runtime_error {
  public:
    SimulationError(double t, const std::string& what)
        : std::runtime_error(what + " (t=" + std::to_string(t) + " s)"), t_(t) {}
    double time() const { return t_; }

  private:
    double t_;
};

/// Opaque-ish integrator state: everything needed to continue a transient
/// run from where another one stopped (same circuit, options may differ).
struct SimSnapshot {
    double t = 0.0;
    std::vector<double> x;       // node voltages then branch currents
    std::vector<double> dstate;  // per-device internal states
    bool empty() const { return x.empty(); }
};

struct SolverOptions {
    Method method = Method::TR;
    double reltol = 1e-6;
    double vntol = 1e-9;   // node voltage convergence floor, volts
    double abstol = 1e-12; // branch current convergence floor, amps
    int max_newton = 100;
    int max_step_halvings = 10;
    /// Override the netlist .tran values (seconds).
    std::optional<double> tstop;
    std::optional<double> dtmax;
    /// Continue from a previous run's final_state instead of solving the
    /// initial operating point.  tstop is absolute time.
    const SimSnapshot* resume = nullptr;
};

struct Waveforms {
    std::vector<double> times;
    std::vector<std::string> names;
    std::vector<std::vector<double>> data;  // parallel to names

    bool has_channel(std::string_view name) const;
    const std::vector<double>& channel(std::string_view name) const;  // throws
};

struct EnergyReport {
    double e_source = 0.0;      // delivered by source EMFs
    double e_load = 0.0;        // dissipated in the load resistor ("rload")
    double e_dissipated = 0.0;  // all other dissipation (switch, diode, esr, ...)
    double e_stored_initial = 0.0;
    double e_stored_final = 0.0;
    double residual_frac = 0.0;  // |balance error| / max(|e_source|, stored)
    std::map<std::string, double> dissipated_by_device;
};

struct RunStats {
    std::size_t steps = 0;
    std::size_t newton_iterations = 0;
    std::size_t step_halvings = 0;
    /// max over steps/nodes of |sum i| / (1e-9 + reltol * sum |i|); KCL is
    /// considered satisfied while this stays <= 1.
    double max_kcl_ratio = 0.0;
    /// max jump of any capacitor voltage / inductor current across a
    /// breakpoint (states carry over, so this should sit at 0).
    double max_breakpoint_state_jump = 0.0;
    EnergyReport energy;
};

struct TransientResult {
    Waveforms waves;
    RunStats stats;
    SimSnapshot final_state;
};

struct DcSolution {
    std::vector<std::string> names;  // "v(node)" entries then "i(device)"
    std::vector<double> values;
    double at(std::string_view name) const;  // throws on unknown name
};

/// Newton DC solve with gmin stepping.  Switches are held at their t=0
/// conductance.  .ic directives pin node voltages (via temporary sources)
/// and inductor currents (replacing the branch equation) for this solve.
DcSolution dc_operating_point(const Circuit& c, const SolverOptions& opts = {});

/// Fixed-dtmax transient with breakpoint snapping at every switch corner.
/// The first step and the first step after each breakpoint use backward
/// Euler; the rest use opts.method.  The run starts from the operating
/// point above unless opts.resume is set.  Channels follow the .probe
/// directives (all node voltages and branch currents when there are none).
TransientResult transient_run(const Circuit& c, const SolverOptions& opts = {});

/// Sorted, deduplicated switch event times within [t0, tstop], with t0 and
/// tstop included.  Events per period: ramp start, ramp end, fall start,
/// fall end (degenerate ones collapse).
std::vector<double> breakpoint_schedule(const Circuit& c, double t0, double tstop);

/// DC-form MNA matrix linearized at x = 0, with row/column labels, for
/// stamp-level inspection in tests.
struct MnaDebug {
    std::vector<std::string> unknowns;
    std::vector<double> a;  // nx * nx row-major
    std::vector<double> rhs;
};
MnaDebug assemble_dc_debug(const Circuit& c);

}  // namespace smpsim
