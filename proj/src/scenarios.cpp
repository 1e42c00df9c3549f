#include "smpsim/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace smpsim {

namespace {

Device* require_device(Circuit& c, std::string_view name, const char* who) {
    Device* d = c.find_device(name);
    if (!d)
        throw std::invalid_argument(std::string(who) + ": circuit has no device '" +
                                    std::string(name) + "'");
    return d;
}

template <typename Model>
Model& require_model(Device& d, const char* who) {
    Model* m = std::get_if<Model>(&d.model);
    if (!m)
        throw std::invalid_argument(std::string(who) + ": device '" + d.name +
                                    "' has an unexpected type");
    return *m;
}

void retarget_node(Circuit& c, std::string_view from, std::string_view to,
                   const std::vector<std::string_view>& skip_devices) {
    for (auto& d : c.devices) {
        bool skip = false;
        for (auto s : skip_devices)
            if (d.name == s) skip = true;
        if (skip) continue;
        if (d.a == from) d.a = to;
        if (d.b == from) d.b = to;
    }
}

}  // namespace

Circuit build_buck_ideal(const BuckParams& p) {
    if (p.vin <= 0 || p.fsw <= 0 || p.l_main <= 0 || p.c_out <= 0 ||
        p.r_load <= 0 || p.c_in <= 0)
        throw std::invalid_argument("build_buck_ideal: all parameters must be positive");
    if (p.duty <= 0 || p.duty >= 1)
        throw std::invalid_argument("build_buck_ideal: duty must lie strictly inside (0,1)");
    // Continuous conduction: the load current must exceed half the
    // inductor current swing, or the freewheel interval ends early and
    // none of the ripple arithmetic downstream applies.
    const double i_load = p.duty * p.vin / p.r_load;
    const double di = p.vin * p.duty * (1.0 - p.duty) / (p.l_main * p.fsw);
    if (i_load <= 0.5 * di)
        throw std::invalid_argument(
            "build_buck_ideal: parameters leave continuous conduction "
            "(load current " + format_value(i_load) + " A, ripple swing " +
            format_value(di) + " A)");

    Circuit c;
    c.title = "ideal buck converter";
    c.devices = {
        {"vsrc", "vin", "0", VSource{p.vin, 0.0, 0.0}},
        {"cin", "vin", "0", Capacitor{p.c_in, 0.0}},
        {"s1", "vin", "sw", Switch{0.05, 1e7, PwmControl{p.fsw, p.duty, 0.0, 0.0, 0.0}}},
        {"d1", "0", "sw", Diode{0.1, 1.0, 1e-12}},
        {"lmain", "sw", "out", Inductor{p.l_main, 0.0, 0.0}},
        {"cout", "out", "0", Capacitor{p.c_out, 0.0}},
        {"rload", "out", "0", Resistor{p.r_load}},
    };
    // 200 steps per switching period resolves the triangular ripple well;
    // presets with fast parasitics tighten this further in phase_preset.
    c.directives.tran = TranDirective{2e-3, 1.0 / (200.0 * p.fsw)};
    // Start each run pre-charged at the nominal conversion point; the
    // remaining distance to the true settled mean is what the settling
    // metric then measures.
    c.directives.ics = {
        {InitialCondition::Kind::NodeVoltage, "out", p.duty * p.vin},
        {InitialCondition::Kind::DeviceCurrent, "lmain", i_load},
    };
    return c;
}

Circuit apply_nonidealities(Circuit c, const NonIdealParams& p) {
    if (p.trise < 0 || p.tfall < 0 || p.l_esr < 0 || p.c_esr < 0)
        throw std::invalid_argument("apply_nonidealities: negative parameter");

    auto& sw = require_model<Switch>(*require_device(c, "s1", "apply_nonidealities"),
                                     "apply_nonidealities");
    sw.ctrl.trise = p.trise;
    sw.ctrl.tfall = p.tfall;

    require_device(c, "d1", "apply_nonidealities")->model = p.diode;

    auto& l = require_model<Inductor>(
        *require_device(c, "lmain", "apply_nonidealities"), "apply_nonidealities");
    l.esr = p.l_esr;
    l.epc = p.l_epc < 0 ? epc_from_resonance(l.value, p.l_resonance) : p.l_epc;

    auto& co = require_model<Capacitor>(
        *require_device(c, "cout", "apply_nonidealities"), "apply_nonidealities");
    co.esr = p.c_esr;
    return c;
}

Circuit add_output_lc_filter(Circuit c, double l, double cap) {
    if (l <= 0 || cap <= 0)
        throw std::invalid_argument("add_output_lc_filter: l and cap must be positive");
    if (!c.has_node("out"))
        throw std::invalid_argument("add_output_lc_filter: circuit has no output node");
    Device* load = require_device(c, "rload", "add_output_lc_filter");
    if (load->a == "out")
        load->a = "vout_f";
    else if (load->b == "out")
        load->b = "vout_f";
    else
        throw std::invalid_argument("add_output_lc_filter: load is not on the output node");
    c.devices.push_back({"lf", "out", "vout_f", Inductor{l, 0.0, 0.0}});
    c.devices.push_back({"cf", "vout_f", "0", Capacitor{cap, 0.0}});
    return c;
}

Circuit add_snubber(Circuit c, double r, double cap) {
    if (r <= 0 || cap <= 0)
        throw std::invalid_argument("add_snubber: r and cap must be positive");
    if (!c.has_node("sw"))
        throw std::invalid_argument("add_snubber: circuit has no switching node");
    const std::string gnd = c.has_node("ncvt") ? "ncvt" : "0";
    c.devices.push_back({"rsnub", "sw", "snb", Resistor{r}});
    c.devices.push_back({"csnub", "snb", gnd, Capacitor{cap, 0.0}});
    return c;
}

Circuit add_snubber(Circuit c) {
    const auto& l = require_model<Inductor>(
        *require_device(c, "lmain", "add_snubber"), "add_snubber");
    if (l.epc <= 0)
        throw std::invalid_argument(
            "add_snubber: automatic sizing needs the inductor's parallel "
            "capacitance (apply_nonidealities first)");
    const double r = std::sqrt(l.value / l.epc);
    return add_snubber(std::move(c), r, 3.0 * l.epc);
}

Circuit add_source_leads(Circuit c, double rs, double ls) {
    if (rs < 0 || ls < 0)
        throw std::invalid_argument("add_source_leads: rs and ls must be non-negative");
    for (auto& d : c.devices) {
        if (auto* v = std::get_if<VSource>(&d.model)) {
            v->rs = rs;
            v->ls = ls;
            return c;
        }
    }
    throw std::invalid_argument("add_source_leads: circuit has no voltage source");
}

Circuit add_lisn(Circuit c, const LisnParams& p) {
    if (p.l_lisn <= 0 || p.c_coupling <= 0 || p.c_bulk <= 0 || p.r_damp <= 0 ||
        p.r_port <= 0 || p.c_earth <= 0)
        throw std::invalid_argument("add_lisn: all parameters must be positive");
    if (c.find_device("llisnp") || c.find_device("llisnn"))
        throw std::invalid_argument("add_lisn: circuit already carries a LISN");

    Device* src = nullptr;
    for (auto& d : c.devices)
        if (std::holds_alternative<VSource>(d.model)) src = &d;
    if (!src) throw std::invalid_argument("add_lisn: circuit has no voltage source");
    if (src->b != "0")
        throw std::invalid_argument("add_lisn: source minus terminal must be grounded");
    const std::string conv_in = src->a;  // converter-side input node

    const bool pos = p.rails != LisnParams::Rails::Negative;
    const bool neg = p.rails != LisnParams::Rails::Positive;

    if (neg) {
        // Lift the converter's ground return onto its own node; the
        // source minus terminal stays at earth (node 0).
        retarget_node(c, "0", "ncvt", {src->name});
    }
    if (pos) {
        src->a = "psrc";
        c.devices.push_back({"llisnp", "psrc", conv_in, Inductor{p.l_lisn, 0.0, 0.0}});
        c.devices.push_back({"ccoupp", conv_in, "lisnp_port", Capacitor{p.c_coupling, 0.0}});
        c.devices.push_back({"rportp", "lisnp_port", "0", Resistor{p.r_port}});
        c.devices.push_back({"cbulkp", "psrc", "pbulk", Capacitor{p.c_bulk, 0.0}});
        c.devices.push_back({"rdampp", "pbulk", "0", Resistor{p.r_damp}});
    }
    if (neg) {
        c.devices.push_back({"llisnn", "ncvt", "0", Inductor{p.l_lisn, 0.0, 0.0}});
        c.devices.push_back({"ccoupn", "ncvt", "lisnn_port", Capacitor{p.c_coupling, 0.0}});
        c.devices.push_back({"rportn", "lisnn_port", "0", Resistor{p.r_port}});
        c.devices.push_back({"cbulkn", "0", "nbulk", Capacitor{p.c_bulk, 0.0}});
        c.devices.push_back({"rdampn", "nbulk", "0", Resistor{p.r_damp}});
    }
    if (pos && neg)
        c.devices.push_back({"cgnd", "ncvt", "0", Capacitor{p.c_earth, 0.0}});
    return c;
}

Circuit add_input_pi_filter(Circuit c, double l, double c1, double c2) {
    if (l <= 0 || c1 <= 0 || c2 <= 0)
        throw std::invalid_argument("add_input_pi_filter: components must be positive");
    Device* lisn_l = c.find_device("llisnp");
    if (!lisn_l)
        throw std::invalid_argument("add_input_pi_filter: add_lisn must come first");
    const std::string lisn_term = lisn_l->b;  // LISN's converter-side terminal
    const std::string gnd = c.has_node("ncvt") ? "ncvt" : "0";

    // The converter's devices move to the new input node; the LISN
    // attachments stay where they are.
    retarget_node(c, lisn_term, "piin",
                  {"llisnp", "ccoupp", "rportp", "cbulkp", "rdampp", "llisnn",
                   "ccoupn", "rportn", "cbulkn", "rdampn", "cgnd"});
    // The lisn-side capacitor carries a series damping resistance: the
    // c1-l-c2 loop is otherwise lossless and its resonance (~22 khz at
    // defaults) would ring for milliseconds.  0.5 ohm puts the loop near
    // zeta = 0.18 while leaving the converter-side shunt path intact.
    c.devices.push_back({"cpi1", lisn_term, gnd, Capacitor{c1, 0.5}});
    c.devices.push_back({"lpi", lisn_term, "piin", Inductor{l, 0.0, 0.0}});
    c.devices.push_back({"cpi2", "piin", gnd, Capacitor{c2, 0.0}});
    return c;
}

Circuit phase_preset(int n, const BuckParams& p) {
    if (n < 1 || n > 6)
        throw std::invalid_argument("phase_preset: preset number must be 1..6");
    Circuit c = build_buck_ideal(p);
    static const char* titles[] = {
        "phase 1: ideal buck converter",
        "phase 2: non-ideal devices",
        "phase 3: output lc filter",
        "phase 4: rc snubber",
        "phase 5: source lead impedance",
        "phase 6: lisn and pi filter",
    };
    if (n >= 2) c = apply_nonidealities(std::move(c));
    if (n >= 3) c = add_output_lc_filter(std::move(c));
    if (n >= 4) c = add_snubber(std::move(c));
    if (n >= 5) c = add_source_leads(std::move(c));
    if (n >= 6) c = add_input_pi_filter(add_lisn(std::move(c)));
    c.title = titles[n - 1];
    if (n >= 2) {
        // Once parasitics are in play the fastest mode is the main
        // inductor's self-resonance; 20 steps per ring period keeps the
        // trapezoidal rule accurate through the commutation edges.
        const auto& l = require_model<Inductor>(
            *require_device(c, "lmain", "phase_preset"), "phase_preset");
        const double f_ring =
            1.0 / (2.0 * std::numbers::pi * std::sqrt(l.value * l.epc));
        c.directives.tran->dtmax =
            std::min(c.directives.tran->dtmax, 1.0 / (20.0 * f_ring));
    }
    return c;
}

}  // namespace smpsim
