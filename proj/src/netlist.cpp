#include "smpsim/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace smpsim {
namespace {

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

struct KeyValue {
    std::string key;
    std::string value;
};

// Splits "esr=0.01" style tokens; returns nullopt for positional tokens.
std::optional<KeyValue> split_kv(const std::string& tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) return std::nullopt;
    return KeyValue{tok.substr(0, eq), tok.substr(eq + 1)};
}

}  // namespace

double parse_value(std::string_view token) {
    if (token.empty()) throw std::invalid_argument("empty value");
    std::string s = to_lower(token);
    double mantissa = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, mantissa);
    if (ec != std::errc{} || ptr == begin)
        throw std::invalid_argument("malformed value '" + std::string(token) + "'");
    std::string_view suffix(ptr, static_cast<std::size_t>(end - ptr));
    if (suffix.empty()) return mantissa;
    // "meg" must be tested before "m".
    static const std::pair<std::string_view, double> suffixes[] = {
        {"meg", 1e6}, {"p", 1e-12}, {"n", 1e-9}, {"u", 1e-6},
        {"m", 1e-3},  {"k", 1e3},   {"g", 1e9},
    };
    for (const auto& [name, scale] : suffixes)
        if (suffix == name) return mantissa * scale;
    throw std::invalid_argument("malformed value '" + std::string(token) +
                                "': unknown suffix '" + std::string(suffix) + "'");
}

std::string format_value(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

// --------------------------------------------------------------------- lookup

std::vector<std::string> Circuit::node_names() const {
    std::set<std::string> names;
    for (const auto& d : devices) {
        if (d.a != "0") names.insert(d.a);
        if (d.b != "0") names.insert(d.b);
    }
    return {names.begin(), names.end()};
}

const Device* Circuit::find_device(std::string_view name) const {
    for (const auto& d : devices)
        if (d.name == name) return &d;
    return nullptr;
}

Device* Circuit::find_device(std::string_view name) {
    for (auto& d : devices)
        if (d.name == name) return &d;
    return nullptr;
}

bool Circuit::has_node(std::string_view name) const {
    if (name == "0") return true;
    for (const auto& d : devices)
        if (d.a == name || d.b == name) return true;
    return false;
}

// --------------------------------------------------------------------- parser

namespace {

double value_or_throw(const std::string& tok, int line) {
    try {
        return parse_value(tok);
    } catch (const std::invalid_argument& e) {
        throw ParseError(line, e.what());
    }
}

PwmControl parse_pwm(const std::string& spec, int line) {
    // ctrl=pwm(freq,duty,trise,tfall[,phase])
    if (spec.size() < 5 || spec.substr(0, 4) != "pwm(" || spec.back() != ')')
        throw ParseError(line, "switch ctrl must be pwm(freq,duty,trise,tfall[,phase])");
    std::string body = spec.substr(4, spec.size() - 5);
    std::vector<std::string> args;
    std::size_t pos = 0;
    while (true) {
        auto comma = body.find(',', pos);
        args.push_back(body.substr(pos, comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (args.size() != 4 && args.size() != 5)
        throw ParseError(line, "pwm() takes 4 or 5 arguments, got " +
                                   std::to_string(args.size()));
    PwmControl c;
    c.freq = value_or_throw(args[0], line);
    c.duty = value_or_throw(args[1], line);
    c.trise = value_or_throw(args[2], line);
    c.tfall = value_or_throw(args[3], line);
    c.phase = args.size() == 5 ? value_or_throw(args[4], line) : 0.0;
    if (c.freq <= 0) throw ParseError(line, "pwm frequency must be positive");
    if (c.duty < 0 || c.duty > 1) throw ParseError(line, "pwm duty must be in [0,1]");
    if (c.trise < 0 || c.tfall < 0)
        throw ParseError(line, "pwm rise/fall times must be non-negative");
    if ((c.trise + c.tfall) * c.freq > 1.0)
        throw ParseError(line, "pwm rise+fall exceeds the switching period");
    return c;
}

struct ProbeRef {
    Probe probe;
    int line;
};
struct IcRef {
    InitialCondition ic;
    int line;
};

Probe parse_probe_item(const std::string& item, int line) {
    auto open = item.find('(');
    if (open == std::string::npos || item.back() != ')')
        throw ParseError(line, "probe must be v(node), v(a,b) or i(device): '" + item + "'");
    std::string head = item.substr(0, open);
    std::string body = item.substr(open + 1, item.size() - open - 2);
    if (body.empty()) throw ParseError(line, "empty probe reference in '" + item + "'");
    if (head == "v") {
        auto comma = body.find(',');
        if (comma == std::string::npos)
            return Probe{Probe::Kind::NodeVoltage, body, ""};
        return Probe{Probe::Kind::DiffVoltage, body.substr(0, comma),
                     body.substr(comma + 1)};
    }
    if (head == "i") return Probe{Probe::Kind::DeviceCurrent, body, ""};
    throw ParseError(line, "unknown probe kind '" + head + "'");
}

}  // namespace

Circuit parse_netlist(std::string_view text) {
    Circuit c;
    std::set<std::string> names;
    std::vector<ProbeRef> probe_refs;
    std::vector<IcRef> ic_refs;

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        std::string line = to_lower(raw);
        auto tokens = split_ws(line);
        if (tokens.empty() || tokens[0][0] == '*') continue;

        if (tokens[0][0] == '.') {
            const std::string& dir = tokens[0];
            if (dir == ".title") {
                // Preserve the original spacing/case of the title text.
                auto at = raw.find('.');
                auto rest = raw.substr(at + std::string_view(".title").size());
                auto first = rest.find_first_not_of(" \t\r");
                c.title = first == std::string_view::npos
                              ? ""
                              : std::string(rest.substr(first));
                while (!c.title.empty() &&
                       std::isspace(static_cast<unsigned char>(c.title.back())))
                    c.title.pop_back();
            } else if (dir == ".tran") {
                if (tokens.size() != 3)
                    throw ParseError(line_no, ".tran needs <tstop> <dtmax>");
                TranDirective t;
                t.tstop = value_or_throw(tokens[1], line_no);
                t.dtmax = value_or_throw(tokens[2], line_no);
                if (t.tstop <= 0 || t.dtmax <= 0)
                    throw ParseError(line_no, ".tran times must be positive");
                if (t.dtmax >= t.tstop)
                    throw ParseError(line_no, ".tran dtmax must be below tstop");
                c.directives.tran = t;
            } else if (dir == ".probe") {
                if (tokens.size() < 2)
                    throw ParseError(line_no, ".probe needs at least one item");
                for (std::size_t i = 1; i < tokens.size(); ++i)
                    probe_refs.push_back({parse_probe_item(tokens[i], line_no), line_no});
            } else if (dir == ".ic") {
                if (tokens.size() < 2)
                    throw ParseError(line_no, ".ic needs at least one item");
                for (std::size_t i = 1; i < tokens.size(); ++i) {
                    const std::string& item = tokens[i];
                    auto eq = item.find(")=");
                    if (eq == std::string::npos)
                        throw ParseError(line_no, ".ic items look like v(node)=x or i(dev)=y");
                    Probe p = parse_probe_item(item.substr(0, eq + 1), line_no);
                    double val = value_or_throw(item.substr(eq + 2), line_no);
                    InitialCondition ic;
                    ic.kind = p.kind == Probe::Kind::DeviceCurrent
                                  ? InitialCondition::Kind::DeviceCurrent
                                  : InitialCondition::Kind::NodeVoltage;
                    if (p.kind == Probe::Kind::DiffVoltage)
                        throw ParseError(line_no, ".ic cannot pin a differential voltage");
                    ic.ref = p.a;
                    ic.value = val;
                    ic_refs.push_back({ic, line_no});
                }
            } else if (dir == ".end") {
                // accepted for SPICE compatibility
            } else {
                throw ParseError(line_no, "unknown directive '" + dir + "'");
            }
            continue;
        }

        // Device line.
        if (tokens.size() < 3)
            throw ParseError(line_no, "device line needs a name and two nodes");
        Device d;
        d.name = tokens[0];
        d.a = tokens[1];
        d.b = tokens[2];
        if (!names.insert(d.name).second)
            throw ParseError(line_no, "duplicate device name '" + d.name + "'");
        if (d.a == d.b)
            throw ParseError(line_no, "device '" + d.name +
                                          "' has both terminals on node '" + d.a + "'");

        std::vector<std::string> positional;
        std::map<std::string, std::string> kv;
        for (std::size_t i = 3; i < tokens.size(); ++i) {
            if (auto p = split_kv(tokens[i])) {
                if (!kv.emplace(p->key, p->value).second)
                    throw ParseError(line_no, "duplicate key '" + p->key + "'");
            } else {
                positional.push_back(tokens[i]);
            }
        }
        auto take = [&](const char* key) -> std::optional<std::string> {
            auto it = kv.find(key);
            if (it == kv.end()) return std::nullopt;
            std::string v = it->second;
            kv.erase(it);
            return v;
        };
        auto expect_positional = [&](const char* what) -> std::string {
            if (positional.empty())
                throw ParseError(line_no, std::string("missing ") + what + " for '" +
                                              d.name + "'");
            std::string v = positional.front();
            positional.erase(positional.begin());
            return v;
        };

        switch (d.name[0]) {
            case 'r': {
                Resistor r;
                r.value = value_or_throw(expect_positional("resistance"), line_no);
                if (r.value <= 0)
                    throw ParseError(line_no, "resistance must be positive");
                d.model = r;
                break;
            }
            case 'c': {
                Capacitor cap;
                cap.value = value_or_throw(expect_positional("capacitance"), line_no);
                if (cap.value <= 0)
                    throw ParseError(line_no, "capacitance must be positive");
                if (auto v = take("esr")) cap.esr = value_or_throw(*v, line_no);
                if (cap.esr < 0) throw ParseError(line_no, "esr must be non-negative");
                d.model = cap;
                break;
            }
            case 'l': {
                Inductor l;
                l.value = value_or_throw(expect_positional("inductance"), line_no);
                if (l.value <= 0)
                    throw ParseError(line_no, "inductance must be positive");
                if (auto v = take("esr")) l.esr = value_or_throw(*v, line_no);
                if (auto v = take("epc")) l.epc = value_or_throw(*v, line_no);
                if (l.esr < 0 || l.epc < 0)
                    throw ParseError(line_no, "esr/epc must be non-negative");
                d.model = l;
                break;
            }
            case 'd': {
                Diode dd;
                if (auto v = take("is")) dd.is_sat = value_or_throw(*v, line_no);
                if (auto v = take("n")) dd.ideality = value_or_throw(*v, line_no);
                if (dd.is_sat <= 0)
                    throw ParseError(line_no, "diode is must be positive");
                if (dd.ideality <= 0)
                    throw ParseError(line_no, "diode n must be positive");
                d.model = dd;
                break;
            }
            case 's': {
                Switch s;
                auto ron = take("ron");
                auto roff = take("roff");
                auto ctrl = take("ctrl");
                if (!ron || !roff || !ctrl)
                    throw ParseError(line_no, "switch needs ron=, roff= and ctrl=");
                s.ron = value_or_throw(*ron, line_no);
                s.roff = value_or_throw(*roff, line_no);
                if (s.ron <= 0 || s.roff <= s.ron)
                    throw ParseError(line_no, "switch needs 0 < ron < roff");
                s.ctrl = parse_pwm(*ctrl, line_no);
                d.model = s;
                break;
            }
            case 'v': {
                VSource v;
                auto dc = take("dc");
                if (!dc) throw ParseError(line_no, "voltage source needs dc=");
                v.dc = value_or_throw(*dc, line_no);
                if (auto x = take("rs")) v.rs = value_or_throw(*x, line_no);
                if (auto x = take("ls")) v.ls = value_or_throw(*x, line_no);
                if (v.rs < 0 || v.ls < 0)
                    throw ParseError(line_no, "rs/ls must be non-negative");
                d.model = v;
                break;
            }
            default:
                throw ParseError(line_no, "unknown device type '" +
                                              std::string(1, d.name[0]) + "'");
        }
        if (!positional.empty())
            throw ParseError(line_no, "unexpected token '" + positional.front() + "'");
        if (!kv.empty())
            throw ParseError(line_no, "unknown key '" + kv.begin()->first + "'");
        c.devices.push_back(std::move(d));
    }

    // Directive references are resolved once all devices are known.
    for (const auto& [p, ln] : probe_refs) {
        switch (p.kind) {
            case Probe::Kind::NodeVoltage:
                if (!c.has_node(p.a))
                    throw ParseError(ln, "probe references unknown node '" + p.a + "'");
                break;
            case Probe::Kind::DiffVoltage:
                if (!c.has_node(p.a))
                    throw ParseError(ln, "probe references unknown node '" + p.a + "'");
                if (!c.has_node(p.b))
                    throw ParseError(ln, "probe references unknown node '" + p.b + "'");
                break;
            case Probe::Kind::DeviceCurrent:
                if (!c.find_device(p.a))
                    throw ParseError(ln, "probe references unknown device '" + p.a + "'");
                break;
        }
        c.directives.probes.push_back(p);
    }
    for (const auto& [ic, ln] : ic_refs) {
        if (ic.kind == InitialCondition::Kind::NodeVoltage) {
            if (!c.has_node(ic.ref))
                throw ParseError(ln, ".ic references unknown node '" + ic.ref + "'");
        } else {
            const Device* d = c.find_device(ic.ref);
            if (!d) throw ParseError(ln, ".ic references unknown device '" + ic.ref + "'");
            if (!std::holds_alternative<Inductor>(d->model))
                throw ParseError(ln, ".ic i(...) pins inductor currents only");
        }
        c.directives.ics.push_back(ic);
    }
    return c;
}

// ----------------------------------------------------------------- serializer

std::string serialize_netlist(const Circuit& c) {
    std::ostringstream out;
    if (!c.title.empty()) out << ".title " << c.title << "\n";
    for (const auto& d : c.devices) {
        out << d.name << ' ' << d.a << ' ' << d.b;
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, Resistor>) {
                    out << ' ' << format_value(m.value);
                } else if constexpr (std::is_same_v<T, Capacitor>) {
                    out << ' ' << format_value(m.value);
                    if (m.esr != 0) out << " esr=" << format_value(m.esr);
                } else if constexpr (std::is_same_v<T, Inductor>) {
                    out << ' ' << format_value(m.value);
                    if (m.esr != 0) out << " esr=" << format_value(m.esr);
                    if (m.epc != 0) out << " epc=" << format_value(m.epc);
                } else if constexpr (std::is_same_v<T, Diode>) {
                    if (m.is_sat != Diode{}.is_sat)
                        out << " is=" << format_value(m.is_sat);
                    if (m.ideality != Diode{}.ideality)
                        out << " n=" << format_value(m.ideality);
                } else if constexpr (std::is_same_v<T, Switch>) {
                    out << " ron=" << format_value(m.ron)
                        << " roff=" << format_value(m.roff) << " ctrl=pwm("
                        << format_value(m.ctrl.freq) << ','
                        << format_value(m.ctrl.duty) << ','
                        << format_value(m.ctrl.trise) << ','
                        << format_value(m.ctrl.tfall);
                    if (m.ctrl.phase != 0) out << ',' << format_value(m.ctrl.phase);
                    out << ')';
                } else if constexpr (std::is_same_v<T, VSource>) {
                    out << " dc=" << format_value(m.dc);
                    if (m.rs != 0) out << " rs=" << format_value(m.rs);
                    if (m.ls != 0) out << " ls=" << format_value(m.ls);
                }
            },
            d.model);
        out << '\n';
    }
    if (c.directives.tran)
        out << ".tran " << format_value(c.directives.tran->tstop) << ' '
            << format_value(c.directives.tran->dtmax) << '\n';
    if (!c.directives.probes.empty()) {
        out << ".probe";
        for (const auto& p : c.directives.probes) {
            switch (p.kind) {
                case Probe::Kind::NodeVoltage: out << " v(" << p.a << ')'; break;
                case Probe::Kind::DiffVoltage:
                    out << " v(" << p.a << ',' << p.b << ')';
                    break;
                case Probe::Kind::DeviceCurrent: out << " i(" << p.a << ')'; break;
            }
        }
        out << '\n';
    }
    if (!c.directives.ics.empty()) {
        out << ".ic";
        for (const auto& ic : c.directives.ics)
            out << (ic.kind == InitialCondition::Kind::NodeVoltage ? " v(" : " i(")
                << ic.ref << ")=" << format_value(ic.value);
        out << '\n';
    }
    return out.str();
}

// ------------------------------------------------------------------ validator

namespace {

// Plain union-find over node names.
class NodeSets {
  public:
    int id(const std::string& n) {
        auto [it, inserted] = index_.try_emplace(n, static_cast<int>(parent_.size()));
        if (inserted) parent_.push_back(it->second);
        return it->second;
    }
    int find(int a) {
        while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
        return a;
    }
    /// Returns false if a and b were already connected.
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent_[a] = b;
        return true;
    }

  private:
    std::map<std::string, int> index_;
    std::vector<int> parent_;
};

}  // namespace

std::vector<Finding> validate_circuit(const Circuit& c) {
    std::vector<Finding> findings;

    std::map<std::string, int> terminal_count;
    bool ground_seen = false;
    for (const auto& d : c.devices) {
        for (const std::string* n : {&d.a, &d.b}) {
            if (*n == "0")
                ground_seen = true;
            else
                ++terminal_count[*n];
        }
    }
    if (!ground_seen)
        findings.push_back({Finding::Kind::MissingGround, "0",
                            "no device terminal is connected to ground node '0'"});

    for (const auto& [node, count] : terminal_count)
        if (count < 2)
            findings.push_back({Finding::Kind::DanglingNode, node,
                                "node '" + node + "' has only " +
                                    std::to_string(count) + " device terminal"});

    // DC-conductive reachability from ground.  Capacitors are open at DC;
    // everything else (switch via finite roff, diode via gmin) conducts.
    NodeSets dc;
    int ground = dc.id("0");
    for (const auto& d : c.devices)
        if (!std::holds_alternative<Capacitor>(d.model)) dc.unite(dc.id(d.a), dc.id(d.b));
    for (const auto& [node, count] : terminal_count) {
        (void)count;
        if (dc.find(dc.id(node)) != dc.find(ground))
            findings.push_back({Finding::Kind::FloatingNode, node,
                                "node '" + node +
                                    "' has no DC-conductive path to ground"});
    }

    // A loop of ideal voltage sources (rs == 0) over-determines the solution.
    NodeSets loops;
    for (const auto& d : c.devices) {
        const auto* v = std::get_if<VSource>(&d.model);
        if (!v || v->rs != 0) continue;
        if (!loops.unite(loops.id(d.a), loops.id(d.b)))
            findings.push_back({Finding::Kind::SourceLoop, d.name,
                                "voltage source '" + d.name +
                                    "' closes a loop of ideal sources"});
    }
    return findings;
}

}  // namespace smpsim
