#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>
#include <string>

#include "smpsim/io.hpp"
#include "smpsim/netlist.hpp"

using namespace smpsim;

TEST_CASE("parse_value handles magnitude suffixes and plain numbers") {
    CHECK(parse_value("4.7u") == doctest::Approx(4.7e-6));
    CHECK(parse_value("100meg") == doctest::Approx(1e8));
    CHECK(parse_value("1e-5") == doctest::Approx(1e-5));
    CHECK(parse_value("1k") == doctest::Approx(1e3));
    CHECK(parse_value("2.5m") == doctest::Approx(2.5e-3));  // m is milli
    CHECK(parse_value("3p") == doctest::Approx(3e-12));
    CHECK(parse_value("7n") == doctest::Approx(7e-9));
    CHECK(parse_value("1g") == doctest::Approx(1e9));
    CHECK(parse_value("1MEG") == doctest::Approx(1e6));  // case-insensitive
    CHECK(parse_value("10") == doctest::Approx(10.0));
    CHECK(parse_value("-0.5") == doctest::Approx(-0.5));

    CHECK_THROWS_AS(parse_value(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("u"), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("4.7x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("1kk"), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("--1"), std::invalid_argument);
}

TEST_CASE("format_value round-trips exactly") {
    for (double v : {0.0, 1.0, -1.0, 4.7e-6, 1e8, 0.02585, 3.141592653589793,
                     1e-12, 5.0321e3, -2.5e-3, 1.0 / 3.0}) {
        const std::string s = format_value(v);
        CHECK(parse_value(s) == v);  // bit-exact round trip
    }
}

TEST_CASE("device lines parse with positional values and key=value pairs") {
    const Circuit c = parse_netlist(
        "* example devices\n"
        "r1   in  out 1k\n"
        "cout out 0   10u esr=0.01\n"
        "lf   sw  out 100u esr=0.05 epc=2.5p\n"
        "d1   0   sw  is=0.1 n=1\n"
        "s1   vin sw  ron=0.05 roff=10meg ctrl=pwm(100k,0.5,20n,20n)\n"
        "vsrc vin 0   dc=10 rs=0.1 ls=1u\n");
    REQUIRE(c.devices.size() == 6);

    const auto* r = c.find_device("r1");
    REQUIRE(r != nullptr);
    CHECK(r->a == "in");
    CHECK(r->b == "out");
    CHECK(std::get<Resistor>(r->model).value == doctest::Approx(1000.0));

    const auto& cap = std::get<Capacitor>(c.find_device("cout")->model);
    CHECK(cap.value == doctest::Approx(10e-6));
    CHECK(cap.esr == doctest::Approx(0.01));

    const auto& l = std::get<Inductor>(c.find_device("lf")->model);
    CHECK(l.value == doctest::Approx(100e-6));
    CHECK(l.esr == doctest::Approx(0.05));
    CHECK(l.epc == doctest::Approx(2.5e-12));

    const auto& d = std::get<Diode>(c.find_device("d1")->model);
    CHECK(d.is_sat == doctest::Approx(0.1));
    CHECK(d.ideality == doctest::Approx(1.0));

    const auto& s = std::get<Switch>(c.find_device("s1")->model);
    CHECK(s.ron == doctest::Approx(0.05));
    CHECK(s.roff == doctest::Approx(1e7));
    CHECK(s.ctrl.freq == doctest::Approx(1e5));
    CHECK(s.ctrl.duty == doctest::Approx(0.5));
    CHECK(s.ctrl.trise == doctest::Approx(20e-9));
    CHECK(s.ctrl.tfall == doctest::Approx(20e-9));
    CHECK(s.ctrl.phase == 0.0);

    const auto& v = std::get<VSource>(c.find_device("vsrc")->model);
    CHECK(v.dc == doctest::Approx(10.0));
    CHECK(v.rs == doctest::Approx(0.1));
    CHECK(v.ls == doctest::Approx(1e-6));
}

TEST_CASE("directives parse: tran, probes, ics, title") {
    const Circuit c = parse_netlist(
        ".title demo circuit\n"
        "v1 in 0 dc=5\n"
        "r1 in out 1k\n"
        "l1 out 0 1m\n"
        ".tran 2m 50n\n"
        ".probe v(out) v(in,out) i(l1)\n"
        ".ic v(out)=2.5 i(l1)=0.1\n"
        ".end\n");
    CHECK(c.title == "demo circuit");
    REQUIRE(c.directives.tran.has_value());
    CHECK(c.directives.tran->tstop == doctest::Approx(2e-3));
    CHECK(c.directives.tran->dtmax == doctest::Approx(50e-9));

    REQUIRE(c.directives.probes.size() == 3);
    CHECK(c.directives.probes[0] == Probe{Probe::Kind::NodeVoltage, "out", ""});
    CHECK(c.directives.probes[1] == Probe{Probe::Kind::DiffVoltage, "in", "out"});
    CHECK(c.directives.probes[2] == Probe{Probe::Kind::DeviceCurrent, "l1", ""});

    REQUIRE(c.directives.ics.size() == 2);
    CHECK(c.directives.ics[0] ==
          InitialCondition{InitialCondition::Kind::NodeVoltage, "out", 2.5});
    CHECK(c.directives.ics[1] ==
          InitialCondition{InitialCondition::Kind::DeviceCurrent, "l1", 0.1});
}

TEST_CASE("input is case-insensitive with lower-case canonical form") {
    const Circuit a = parse_netlist("R1 IN OUT 1K\nVSRC IN 0 DC=10\n");
    const Circuit b = parse_netlist("r1 in out 1k\nvsrc in 0 dc=10\n");
    CHECK(a == b);
    CHECK(a.find_device("r1") != nullptr);
    CHECK(a.has_node("in"));
}

TEST_CASE("serialize then parse is the identity") {
    const char* sources[] = {
        "r1 a b 4.7k\n",
        ".title full set\n"
        "vsrc vin 0 dc=10 rs=0.05 ls=0.5u\n"
        "cin vin 0 10u\n"
        "s1 vin sw ron=0.05 roff=10meg ctrl=pwm(100k,0.45,20n,10n,1u)\n"
        "d1 0 sw is=0.05 n=1.2\n"
        "lmain sw out 100u esr=0.05 epc=25.33p\n"
        "cout out 0 100u esr=0.01\n"
        "rload out 0 5\n"
        ".tran 2m 5n\n"
        ".probe v(out) v(sw,0) i(lmain)\n"
        ".ic v(out)=5 i(lmain)=1\n",
    };
    for (const char* src : sources) {
        const Circuit c = parse_netlist(src);
        const std::string text = serialize_netlist(c);
        CHECK(parse_netlist(text) == c);
    }
}

TEST_CASE("parse errors carry 1-based line numbers") {
    // Bad value on line 3.
    try {
        parse_netlist("* ok\nr1 a b 1k\nr2 a b 1x\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }

    // Duplicate device name on line 2.
    try {
        parse_netlist("r1 a b 1k\nr1 b 0 2k\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    // Probe referencing a node that does not exist, line 2.
    try {
        parse_netlist("r1 a 0 1k\n.probe v(nothere)\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    // ic referencing an unknown device.
    CHECK_THROWS_AS(parse_netlist("r1 a 0 1k\n.ic i(l9)=1\n"), ParseError);
    // Unknown device type letter.
    CHECK_THROWS_AS(parse_netlist("q1 a 0 1k\n"), ParseError);
    // Too few nodes.
    CHECK_THROWS_AS(parse_netlist("r1 a\n"), ParseError);
    // Negative component value.
    CHECK_THROWS_AS(parse_netlist("r1 a 0 -5\n"), ParseError);
    // Malformed pwm spec.
    CHECK_THROWS_AS(parse_netlist("s1 a 0 ron=1 roff=1k ctrl=pwm(100k)\n"),
                    ParseError);
    // tran with dtmax >= tstop.
    CHECK_THROWS_AS(parse_netlist("r1 a 0 1k\n.tran 1m 1m\n"), ParseError);
}

TEST_CASE("node_names is sorted, unique, and excludes ground") {
    const Circuit c = parse_netlist(
        "r1 beta alpha 1\n"
        "r2 alpha 0 1\n"
        "r3 beta 0 1\n");
    const auto names = c.node_names();
    REQUIRE(names.size() == 2);
    CHECK(names[0] == "alpha");
    CHECK(names[1] == "beta");
    CHECK(c.has_node("beta"));
    CHECK_FALSE(c.has_node("gamma"));
}

TEST_CASE("validate_circuit flags structural problems") {
    // Clean circuit: no findings.
    CHECK(validate_circuit(parse_netlist("v1 in 0 dc=1\nr1 in 0 1k\n")).empty());

    // No ground anywhere.
    {
        const auto f = validate_circuit(parse_netlist("r1 a b 1k\nr2 b a 2k\n"));
        REQUIRE_FALSE(f.empty());
        CHECK(f[0].kind == Finding::Kind::MissingGround);
    }

    // Dangling node: only one terminal touches it.
    {
        const auto f =
            validate_circuit(parse_netlist("v1 in 0 dc=1\nr1 in dangly 1k\n"));
        bool found = false;
        for (const auto& x : f)
            if (x.kind == Finding::Kind::DanglingNode && x.subject == "dangly")
                found = true;
        CHECK(found);
    }

    // Floating island: reachable only through a capacitor.
    {
        const auto f = validate_circuit(parse_netlist(
            "v1 in 0 dc=1\nc1 in island 1u\nr1 island island2 1k\nr2 island2 "
            "island 2k\n"));
        bool found = false;
        for (const auto& x : f)
            if (x.kind == Finding::Kind::FloatingNode) found = true;
        CHECK(found);
    }

    // Loop of ideal voltage sources.
    {
        const auto f = validate_circuit(
            parse_netlist("v1 a 0 dc=1\nv2 a 0 dc=2\nr1 a 0 1k\n"));
        bool found = false;
        for (const auto& x : f)
            if (x.kind == Finding::Kind::SourceLoop) found = true;
        CHECK(found);
    }

    // A switch counts as DC-conductive (roff finite), so this is clean.
    CHECK(validate_circuit(
              parse_netlist("v1 in 0 dc=1\ns1 in out ron=0.1 roff=1meg "
                            "ctrl=pwm(1k,0.5,0,0)\nr1 out 0 1k\n"))
              .empty());
}

TEST_CASE("golden netlist files parse and validate clean") {
    for (const char* name :
         {"rc_step.cir", "rlc_ring.cir", "divider.cir", "buck_small.cir"}) {
        const std::string path = std::string(SMPSIM_NETLIST_DIR) + "/" + name;
        const Circuit c = parse_netlist(io::read_text(path));
        CHECK(validate_circuit(c).empty());
        REQUIRE(c.directives.tran.has_value());
        CHECK(parse_netlist(serialize_netlist(c)) == c);
    }
}
