#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Circuit description and the SPICE-flavoured netlist front end.
//
// A netlist is a line-oriented text file.  Lines starting with '*' are
// comments.  A device line is the device name (first letter selects the
// type), two node names, then positional values and key=value pairs:
//
//   r1   in  out 1k
//   cout out 0   10u esr=0.01
//   lf   sw  out 100u esr=0.05 epc=2.5p
//   d1   0   sw  is=0.1 n=1
//   s1   vin sw  ron=0.05 roff=10meg ctrl=pwm(100k,0.5,20n,20n)
//   vsrc vin 0   dc=10 rs=0.1 ls=1u
//
// Ground is the literal node name "0".  Names and values are
// case-insensitive; the canonical (serialized) form is lower case.  Values
// accept the usual magnitude suffixes p n u m k meg g ("m" is milli, "meg"
// is 1e6).
//
// Directives: .tran <tstop> <dtmax>, .probe v(node) v(a,b) i(dev)...,
// .ic v(node)=x i(ldev)=y, .title <text>, .end (ignored).

namespace smpsim {

/// Netlist syntax error; `line` is 1-based.
class ParseError : public std::runtime_error {
  public:
    ParseError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what),
          line_(line) {}
    int line() const { return line_; }

  private:
    int line_;
};

/// Periodic gate drive for a switch: `freq` in Hz, `duty` in [0,1],
/// rise/fall times and phase offset in seconds.
struct PwmControl {
    double freq = 1e5;
    double duty = 0.5;
    double trise = 0.0;
    double tfall = 0.0;
    double phase = 0.0;
    bool operator==(const PwmControl&) const = default;
};

struct Resistor {
    double value = 0.0;  // ohms
    bool operator==(const Resistor&) const = default;
};

struct Capacitor {
    double value = 0.0;  // farads
    double esr = 0.0;    // series resistance, 0 = ideal
    bool operator==(const Capacitor&) const = default;
};

struct Inductor {
    double value = 0.0;  // henries
    double esr = 0.0;    // series resistance
    double epc = 0.0;    // parallel (self-resonance) capacitance, 0 = none
    bool operator==(const Inductor&) const = default;
};

/// Shockley diode; terminal a is the anode.
struct Diode {
    double is_sat = 1e-14;  // saturation current, amps
    double ideality = 1.0;
    double gmin = 1e-12;    // fixed parallel conductance aiding convergence
    bool operator==(const Diode&) const = default;
};

/// PWM-gated resistance: ron when driven on, roff when off, with
/// log-linear resistance ramps over trise/tfall.
struct Switch {
    double ron = 0.05;
    double roff = 1e7;
    PwmControl ctrl;
    bool operator==(const Switch&) const = default;
};

/// DC voltage source; rs/ls model the internal (lead) impedance and live
/// inside the source branch.  Terminal a is the positive terminal.
struct VSource {
    double dc = 0.0;
    double rs = 0.0;
    double ls = 0.0;
    bool operator==(const VSource&) const = default;
};

using DeviceModel =
    std::variant<Resistor, Capacitor, Inductor, Diode, Switch, VSource>;

struct Device {
    std::string name;  // full token, e.g. "rload"
    std::string a;     // first node (anode / + terminal)
    std::string b;     // second node
    DeviceModel model;
    bool operator==(const Device&) const = default;
};

struct Probe {
    enum class Kind { NodeVoltage, DiffVoltage, DeviceCurrent };
    Kind kind = Kind::NodeVoltage;
    std::string a;  // node (or device name for DeviceCurrent)
    std::string b;  // second node for DiffVoltage
    bool operator==(const Probe&) const = default;
};

/// Pre-charge for the transient start: pins a node voltage or an inductor
/// current during the initial operating-point solve.
struct InitialCondition {
    enum class Kind { NodeVoltage, DeviceCurrent };
    Kind kind = Kind::NodeVoltage;
    std::string ref;
    double value = 0.0;
    bool operator==(const InitialCondition&) const = default;
};

struct TranDirective {
    double tstop = 0.0;
    double dtmax = 0.0;
    bool operator==(const TranDirective&) const = default;
};

struct Directives {
    std::optional<TranDirective> tran;
    std::vector<Probe> probes;
    std::vector<InitialCondition> ics;
    bool operator==(const Directives&) const = default;
};

struct Circuit {
    std::string title;
    std::vector<Device> devices;
    Directives directives;

    bool operator==(const Circuit&) const = default;

    /// Sorted unique node names, ground ("0") excluded.
    std::vector<std::string> node_names() const;
    /// nullptr when absent.
    const Device* find_device(std::string_view name) const;
    Device* find_device(std::string_view name);
    bool has_node(std::string_view name) const;
};

/// Parse "4.7u", "100meg", "1e-5", ... into a double.
/// Throws std::invalid_argument on malformed input.
double parse_value(std::string_view token);

/// Shortest decimal form that parses back to exactly the same double.
/// No magnitude suffixes are emitted.
std::string format_value(double v);

/// Throws ParseError (with 1-based line number) on bad syntax, duplicate
/// device names, or probes/ics referencing unknown nodes or devices.
Circuit parse_netlist(std::string_view text);

/// Canonical text form; parse_netlist(serialize_netlist(c)) == c.
std::string serialize_netlist(const Circuit& c);

struct Finding {
    enum class Kind {
        MissingGround,   // no device terminal is node "0"
        DanglingNode,    // node with fewer than two device terminals
        FloatingNode,    // no DC-conductive path to ground
        SourceLoop,      // loop of ideal voltage sources
    };
    Kind kind;
    std::string subject;  // node or device name
    std::string message;
    bool operator==(const Finding&) const = default;
};

/// Structural checks; an empty result means the circuit is simulatable.
/// DC-conductive for the floating-node check means every device except
/// capacitors (switches count: roff is finite).
std::vector<Finding> validate_circuit(const Circuit& c);

}  // namespace smpsim
