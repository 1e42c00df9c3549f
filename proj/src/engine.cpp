#include "smpsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdint>

#include "smpsim/kernels.hpp"
#include "smpsim/linalg.hpp"

namespace smpsim {

bool Waveforms::has_channel(std::string_view name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

const std::vector<double>& Waveforms::channel(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return data[i];
    throw std::invalid_argument("no channel named '" + std::string(name) + "'");
}

double DcSolution::at(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[i];
    throw std::invalid_argument("no dc unknown named '" + std::string(name) + "'");
}

namespace {

struct Dev {
    enum class Kind { R, C, L, D, S, V } kind;
    int a = -1, b = -1;   // node indices, -1 = ground
    int branch = -1;      // row/column nx offset for L and V
    int st = -1;          // 2 state slots
    int st2 = -1;         // 2 more for an inductor's epc
    double p1 = 0, p2 = 0, p3 = 0;
    Diode dio;
    Switch sw;
    std::string name;
    bool is_load = false;
};

struct Compiled {
    std::vector<std::string> node_names;
    std::map<std::string, int, std::less<>> node_index;
    std::vector<Dev> devs;
    int n_nodes = 0;
    int n_branch = 0;
    int n_state = 0;
    int n_diodes = 0;
    bool has_diodes = false;
    int nx() const { return n_nodes + n_branch; }
};

Compiled compile(const Circuit& c) {
    Compiled cc;
    auto node_id = [&](const std::string& n) -> int {
        if (n == "0") return -1;
        auto [it, fresh] = cc.node_index.try_emplace(n, cc.n_nodes);
        if (fresh) {
            cc.node_names.push_back(n);
            ++cc.n_nodes;
        }
        return it->second;
    };
    for (const auto& d : c.devices) {
        Dev dv;
        dv.name = d.name;
        dv.a = node_id(d.a);
        dv.b = node_id(d.b);
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, Resistor>) {
                    dv.kind = Dev::Kind::R;
                    dv.p1 = 1.0 / m.value;
                    dv.is_load = d.name == "rload";
                } else if constexpr (std::is_same_v<T, Capacitor>) {
                    dv.kind = Dev::Kind::C;
                    dv.p1 = m.value;
                    dv.p2 = m.esr;
                    dv.st = cc.n_state;
                    cc.n_state += 2;
                } else if constexpr (std::is_same_v<T, Inductor>) {
                    dv.kind = Dev::Kind::L;
                    dv.p1 = m.value;
                    dv.p2 = m.esr;
                    dv.p3 = m.epc;
                    dv.branch = cc.n_branch++;
                    dv.st = cc.n_state;
                    cc.n_state += 2;
                    if (m.epc > 0) {
                        dv.st2 = cc.n_state;
                        cc.n_state += 2;
                    }
                } else if constexpr (std::is_same_v<T, Diode>) {
                    dv.kind = Dev::Kind::D;
                    dv.dio = m;
                    cc.has_diodes = true;
                    ++cc.n_diodes;
                } else if constexpr (std::is_same_v<T, Switch>) {
                    dv.kind = Dev::Kind::S;
                    dv.sw = m;
                } else if constexpr (std::is_same_v<T, VSource>) {
                    dv.kind = Dev::Kind::V;
                    dv.p1 = m.dc;
                    dv.p2 = m.rs;
                    dv.p3 = m.ls;
                    dv.branch = cc.n_branch++;
                    dv.st = cc.n_state;
                    cc.n_state += 2;
                }
            },
            d.model);
        cc.devs.push_back(std::move(dv));
    }
    return cc;
}

inline void stamp_g(std::vector<double>& m, int nx, int a, int b, double g) {
    if (a >= 0) m[a * nx + a] += g;
    if (b >= 0) m[b * nx + b] += g;
    if (a >= 0 && b >= 0) {
        m[a * nx + b] -= g;
        m[b * nx + a] -= g;
    }
}

// Current source `i` flowing from node b to node a (Norton history form).
inline void stamp_i(std::vector<double>& rhs, int a, int b, double i) {
    if (a >= 0) rhs[a] += i;
    if (b >= 0) rhs[b] -= i;
}

// Junction voltage limiting between Newton iterations. An unlimited step
// onto a stiff exponential overshoots by orders of magnitude (megavolts at
// switch commutation); damping the linearization point logarithmically keeps
// every iterate on the physically meaningful part of the curve.
inline double pnjlim(double vnew, double vold, double vt, double vcrit) {
    if (vnew > vcrit && std::fabs(vnew - vold) > 2.0 * vt) {
        if (vold > 0) {
            const double arg = 1.0 + (vnew - vold) / vt;
            vnew = arg > 0 ? vold + vt * std::log(arg) : vcrit;
        } else if (vnew > vt) {
            vnew = vt * std::log(vnew / vt);
        }
    }
    return vnew;
}

inline double diode_vt(const Diode& d) { return 0.02585 * d.ideality; }

inline double diode_vcrit(const Diode& d) {
    const double vt = diode_vt(d);
    return vt * std::log(vt / (1.4142135623730951 * d.is_sat));
}

struct ChannelDef {
    enum class Kind { NodeV, DiffV, DevI } kind;
    int a = -1, b = -1;  // node indices
    int dev = -1;        // device index for DevI
    std::string label;
};

std::vector<ChannelDef> make_channels(const Circuit& c, const Compiled& cc) {
    std::vector<ChannelDef> out;
    auto nid = [&](const std::string& n) -> int {
        if (n == "0") return -1;
        return cc.node_index.at(n);
    };
    if (c.directives.probes.empty()) {
        for (int i = 0; i < cc.n_nodes; ++i)
            out.push_back({ChannelDef::Kind::NodeV, i, -1, -1,
                           "v(" + cc.node_names[i] + ")"});
        for (std::size_t d = 0; d < cc.devs.size(); ++d)
            if (cc.devs[d].branch >= 0)
                out.push_back({ChannelDef::Kind::DevI, -1, -1, static_cast<int>(d),
                               "i(" + cc.devs[d].name + ")"});
        return out;
    }
    for (const auto& p : c.directives.probes) {
        switch (p.kind) {
            case Probe::Kind::NodeVoltage:
                out.push_back({ChannelDef::Kind::NodeV, nid(p.a), -1, -1,
                               "v(" + p.a + ")"});
                break;
            case Probe::Kind::DiffVoltage:
                out.push_back({ChannelDef::Kind::DiffV, nid(p.a), nid(p.b), -1,
                               "v(" + p.a + "," + p.b + ")"});
                break;
            case Probe::Kind::DeviceCurrent: {
                int di = -1;
                for (std::size_t d = 0; d < cc.devs.size(); ++d)
                    if (cc.devs[d].name == p.a) di = static_cast<int>(d);
                out.push_back({ChannelDef::Kind::DevI, -1, -1, di, "i(" + p.a + ")"});
                break;
            }
        }
    }
    return out;
}

class Engine {
  public:
    Engine(const Circuit& c, const SolverOptions& o)
        : ckt_(c), opts_(o), cc_(compile(c)) {
        const int nx = cc_.nx();
        x_.assign(nx, 0.0);
        xsave_.assign(nx, 0.0);
        dstate_.assign(cc_.n_state, 0.0);
        base_a_.assign(nx * nx, 0.0);
        base_rhs_.assign(nx, 0.0);
        a_.assign(nx * nx, 0.0);
        rhs_.assign(nx, 0.0);
        piv_.assign(nx, 0);
        kcl_.assign(cc_.n_nodes, 0.0);
        kcl_abs_.assign(cc_.n_nodes, 0.0);
        p_diss_prev_.assign(cc_.devs.size(), 0.0);
        p_src_prev_.assign(cc_.devs.size(), 0.0);
        e_diss_.assign(cc_.devs.size(), 0.0);
        e_src_.assign(cc_.devs.size(), 0.0);
        dlin_.assign(cc_.n_diodes, 0.0);
        dlin_g_.assign(cc_.n_diodes, 0.0);
        dlin_ieq_.assign(cc_.n_diodes, 0.0);
    }

    DcSolution dc_solution() {
        std::vector<double> xdc = solve_dc();
        DcSolution s;
        for (int i = 0; i < cc_.n_nodes; ++i) {
            s.names.push_back("v(" + cc_.node_names[i] + ")");
            s.values.push_back(xdc[i]);
        }
        for (const auto& d : cc_.devs)
            if (d.branch >= 0) {
                s.names.push_back("i(" + d.name + ")");
                s.values.push_back(xdc[cc_.n_nodes + d.branch]);
            }
        return s;
    }

    TransientResult run();

  private:
    const Circuit& ckt_;
    SolverOptions opts_;
    Compiled cc_;

    std::vector<double> x_, xsave_, dstate_;
    std::vector<double> base_a_, base_rhs_, a_, rhs_;
    // Per-diode linearization point (junction volts) and its companion model.
    std::vector<double> dlin_, dlin_g_, dlin_ieq_;
    std::vector<int> piv_;
    std::vector<double> kcl_, kcl_abs_;
    std::vector<double> p_diss_prev_, p_src_prev_, e_diss_, e_src_;
    RunStats stats_;

    double vx(int n) const { return n < 0 ? 0.0 : x_[n]; }

    bool x_converged(const std::vector<double>& xo,
                     const std::vector<double>& xn) const {
        const int nn = cc_.n_nodes;
        const int nx = static_cast<int>(xn.size());
        for (int i = 0; i < nx; ++i) {
            const double tol =
                (i < nn ? opts_.vntol : opts_.abstol) +
                opts_.reltol * std::max(std::fabs(xo[i]), std::fabs(xn[i]));
            if (std::fabs(xn[i] - xo[i]) > tol) return false;
        }
        return true;
    }

    // ------------------------------------------------------------------ DC

    std::vector<double> solve_dc();

    // ------------------------------------------------------------- transient

    void build_base(double t_next, double dt, Method m);
    int newton_step();
    void update_states(double dt, Method m);
    void init_states_from_dc(const std::vector<double>& xdc);
    double device_current(const Dev& d, double t, double dt, Method m,
                          const double* old_state) const;
    void accumulate_step_stats(double t, double dt, Method m,
                               const std::vector<double>& old_state);
    double stored_energy() const;
};

// ---------------------------------------------------------------------- DC

std::vector<double> Engine::solve_dc() {
    const int nn = cc_.n_nodes;
    const int nb = cc_.n_branch;

    // Initial-condition pins: node voltages get an extra source row each,
    // inductor currents replace their own branch row.
    struct NodePin {
        int node;
        double v;
    };
    std::vector<NodePin> node_pins;
    std::vector<std::pair<int, double>> ind_pins;  // device index, current
    for (const auto& ic : ckt_.directives.ics) {
        if (ic.kind == InitialCondition::Kind::NodeVoltage) {
            node_pins.push_back({cc_.node_index.at(ic.ref), ic.value});
        } else {
            for (std::size_t d = 0; d < cc_.devs.size(); ++d)
                if (cc_.devs[d].name == ic.ref)
                    ind_pins.push_back({static_cast<int>(d), ic.value});
        }
    }

    const int nd = nn + nb + static_cast<int>(node_pins.size());
    std::vector<double> x(nd, 0.0), xn(nd, 0.0), am(nd * nd, 0.0), rhs(nd, 0.0);
    std::vector<int> piv(nd, 0);

    static constexpr double kGminLadder[] = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6,
                                             1e-7, 1e-8, 1e-9, 1e-12, 0.0};

    std::fill(dlin_.begin(), dlin_.end(), 0.0);
    for (std::size_t rung = cc_.has_diodes ? 0 : std::size(kGminLadder) - 1;
         rung < std::size(kGminLadder); ++rung) {
        const double gshunt = kGminLadder[rung];
        bool converged = false;
        for (int iter = 0; iter < opts_.max_newton; ++iter) {
            std::fill(am.begin(), am.end(), 0.0);
            std::fill(rhs.begin(), rhs.end(), 0.0);
            int dk = 0;
            for (const auto& d : cc_.devs) {
                const int row = nn + d.branch;
                switch (d.kind) {
                    case Dev::Kind::R:
                        stamp_g(am, nd, d.a, d.b, d.p1);
                        break;
                    case Dev::Kind::C:
                        break;  // open at DC
                    case Dev::Kind::L:
                    case Dev::Kind::V: {
                        if (d.a >= 0) {
                            am[row * nd + d.a] += 1.0;
                            am[d.a * nd + row] += 1.0;
                        }
                        if (d.b >= 0) {
                            am[row * nd + d.b] -= 1.0;
                            am[d.b * nd + row] -= 1.0;
                        }
                        am[row * nd + row] -= d.p2;  // esr / rs
                        rhs[row] = d.kind == Dev::Kind::V ? d.p1 : 0.0;
                        break;
                    }
                    case Dev::Kind::D: {
                        const double v = dlin_[dk];
                        const auto [i, g] = diode_eval(d.dio, v);
                        dlin_g_[dk] = g;
                        dlin_ieq_[dk] = i - g * v;
                        ++dk;
                        stamp_g(am, nd, d.a, d.b, g);
                        stamp_i(rhs, d.a, d.b, -(i - g * v));
                        break;
                    }
                    case Dev::Kind::S:
                        stamp_g(am, nd, d.a, d.b, switch_conductance(d.sw, 0.0));
                        break;
                }
            }
            for (const auto& [di, val] : ind_pins) {
                const int row = nn + cc_.devs[di].branch;
                std::fill(am.begin() + row * nd, am.begin() + (row + 1) * nd, 0.0);
                am[row * nd + row] = 1.0;
                rhs[row] = val;
            }
            for (std::size_t k = 0; k < node_pins.size(); ++k) {
                const int row = nn + nb + static_cast<int>(k);
                am[row * nd + node_pins[k].node] = 1.0;
                am[node_pins[k].node * nd + row] = 1.0;
                rhs[row] = node_pins[k].v;
            }
            if (gshunt > 0)
                for (int i = 0; i < nn; ++i) am[i * nd + i] += gshunt;

            if (!lu_factor(am.data(), nd, piv.data()))
                throw SimulationError(0.0, "singular matrix in dc operating point");
            xn = rhs;
            lu_solve(am.data(), nd, piv.data(), xn.data());

            bool ok = !cc_.has_diodes || x_converged(x, xn);
            dk = 0;
            for (const auto& d : cc_.devs) {
                if (d.kind != Dev::Kind::D) continue;
                const double vn = (d.a >= 0 ? xn[d.a] : 0.0) -
                                  (d.b >= 0 ? xn[d.b] : 0.0);
                if (ok) {
                    // Linearization must describe the accepted point too.
                    const double i_lin = dlin_g_[dk] * vn + dlin_ieq_[dk];
                    const double i_true = diode_eval(d.dio, vn).i;
                    if (std::fabs(i_true - i_lin) >
                        opts_.abstol + opts_.reltol * std::fabs(i_true))
                        ok = false;
                }
                dlin_[dk] = pnjlim(vn, dlin_[dk], diode_vt(d.dio),
                                   diode_vcrit(d.dio));
                ++dk;
            }
            x = xn;
            if (ok || !cc_.has_diodes) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw SimulationError(
                0.0, "dc operating point did not converge (gmin step " +
                         format_value(gshunt) + ")");
    }
    return x;
}

// ----------------------------------------------------------------- transient

void Engine::build_base(double t_next, double dt, Method m) {
    const int nx = cc_.nx();
    const int nn = cc_.n_nodes;
    std::fill(base_a_.begin(), base_a_.end(), 0.0);
    std::fill(base_rhs_.begin(), base_rhs_.end(), 0.0);
    for (const auto& d : cc_.devs) {
        const int row = nn + d.branch;
        switch (d.kind) {
            case Dev::Kind::R:
                stamp_g(base_a_, nx, d.a, d.b, d.p1);
                break;
            case Dev::Kind::C: {
                const auto nc = cap_companion(d.p1, d.p2, m, dt, dstate_[d.st],
                                              dstate_[d.st + 1]);
                stamp_g(base_a_, nx, d.a, d.b, nc.g);
                stamp_i(base_rhs_, d.a, d.b, nc.i_hist);
                break;
            }
            case Dev::Kind::L: {
                const auto bc = ind_companion(d.p1, d.p2, m, dt, dstate_[d.st],
                                              dstate_[d.st + 1]);
                if (d.a >= 0) {
                    base_a_[row * nx + d.a] += 1.0;
                    base_a_[d.a * nx + row] += 1.0;
                }
                if (d.b >= 0) {
                    base_a_[row * nx + d.b] -= 1.0;
                    base_a_[d.b * nx + row] -= 1.0;
                }
                base_a_[row * nx + row] -= bc.r_eq;
                base_rhs_[row] = bc.e_hist;
                if (d.st2 >= 0) {
                    const auto nc = cap_companion(d.p3, 0.0, m, dt, dstate_[d.st2],
                                                  dstate_[d.st2 + 1]);
                    stamp_g(base_a_, nx, d.a, d.b, nc.g);
                    stamp_i(base_rhs_, d.a, d.b, nc.i_hist);
                }
                break;
            }
            case Dev::Kind::S:
                // The step transfers charge g_avg * v * dt; breakpoints
                // keep every step inside one pwm regime, so the average
                // has the closed form and edge samples stay unambiguous.
                stamp_g(base_a_, nx, d.a, d.b,
                        switch_conductance_avg(d.sw, t_next - dt, t_next));
                break;
            case Dev::Kind::V: {
                const auto bc = ind_companion(d.p3 > 0 ? d.p3 : 1e-30, 0.0, m, dt,
                                              dstate_[d.st], dstate_[d.st + 1]);
                const double r_eq = d.p3 > 0 ? bc.r_eq : 0.0;
                const double e_hist = d.p3 > 0 ? bc.e_hist : 0.0;
                if (d.a >= 0) {
                    base_a_[row * nx + d.a] += 1.0;
                    base_a_[d.a * nx + row] += 1.0;
                }
                if (d.b >= 0) {
                    base_a_[row * nx + d.b] -= 1.0;
                    base_a_[d.b * nx + row] -= 1.0;
                }
                base_a_[row * nx + row] -= d.p2 + r_eq;
                base_rhs_[row] = d.p1 + e_hist;
                break;
            }
            case Dev::Kind::D:
                break;  // stamped per Newton iteration
        }
    }
}

// One Newton solve sequence on the prepared base; returns the iteration
// count, or -1 when it did not converge (caller halves dt and retries).
int Engine::newton_step() {
    const int nx = cc_.nx();
    xsave_ = x_;
    {
        int dk = 0;
        for (const auto& d : cc_.devs)
            if (d.kind == Dev::Kind::D) dlin_[dk++] = vx(d.a) - vx(d.b);
    }
    for (int iter = 1; iter <= opts_.max_newton; ++iter) {
        std::memcpy(a_.data(), base_a_.data(), sizeof(double) * a_.size());
        std::memcpy(rhs_.data(), base_rhs_.data(), sizeof(double) * rhs_.size());

        int dk = 0;
        for (const auto& d : cc_.devs) {
            if (d.kind != Dev::Kind::D) continue;
            const double v = dlin_[dk];
            const auto [i, g] = diode_eval(d.dio, v);
            dlin_g_[dk] = g;
            dlin_ieq_[dk] = i - g * v;
            ++dk;
            stamp_g(a_, nx, d.a, d.b, g);
            stamp_i(rhs_, d.a, d.b, -(i - g * v));
        }

        if (!lu_factor(a_.data(), nx, piv_.data())) {
            x_ = xsave_;
            return -1;
        }
        lu_solve(a_.data(), nx, piv_.data(), rhs_.data());
        ++stats_.newton_iterations;

        if (!cc_.has_diodes) {
            x_.swap(rhs_);
            return iter;
        }

        bool ok = x_converged(x_, rhs_);
        dk = 0;
        for (const auto& d : cc_.devs) {
            if (d.kind != Dev::Kind::D) continue;
            const double vn = (d.a >= 0 ? rhs_[d.a] : 0.0) -
                              (d.b >= 0 ? rhs_[d.b] : 0.0);
            if (ok) {
                const double i_lin = dlin_g_[dk] * vn + dlin_ieq_[dk];
                const double i_true = diode_eval(d.dio, vn).i;
                if (std::fabs(i_true - i_lin) >
                    opts_.abstol + opts_.reltol * std::fabs(i_true))
                    ok = false;
            }
            dlin_[dk] = pnjlim(vn, dlin_[dk], diode_vt(d.dio), diode_vcrit(d.dio));
            ++dk;
        }
        x_.swap(rhs_);
        if (ok) return iter;
    }
    x_ = xsave_;
    return -1;
}

void Engine::update_states(double dt, Method m) {
    for (const auto& d : cc_.devs) {
        const double vab = vx(d.a) - vx(d.b);
        switch (d.kind) {
            case Dev::Kind::C: {
                const auto nc = cap_companion(d.p1, d.p2, m, dt, dstate_[d.st],
                                              dstate_[d.st + 1]);
                const double i = nc.g * vab - nc.i_hist;
                dstate_[d.st] = vab - d.p2 * i;
                dstate_[d.st + 1] = i;
                break;
            }
            case Dev::Kind::L: {
                const double i = x_[cc_.n_nodes + d.branch];
                dstate_[d.st] = i;
                dstate_[d.st + 1] = vab - d.p2 * i;
                if (d.st2 >= 0) {
                    const auto nc = cap_companion(d.p3, 0.0, m, dt, dstate_[d.st2],
                                                  dstate_[d.st2 + 1]);
                    dstate_[d.st2 + 1] = nc.g * vab - nc.i_hist;
                    dstate_[d.st2] = vab;
                }
                break;
            }
            case Dev::Kind::V: {
                const double i = x_[cc_.n_nodes + d.branch];
                dstate_[d.st] = i;
                dstate_[d.st + 1] = d.p3 > 0 ? vab - d.p1 - d.p2 * i : 0.0;
                break;
            }
            default:
                break;
        }
    }
}

void Engine::init_states_from_dc(const std::vector<double>& xdc) {
    for (int i = 0; i < cc_.nx(); ++i) x_[i] = xdc[i];
    for (const auto& d : cc_.devs) {
        const double vab = vx(d.a) - vx(d.b);
        switch (d.kind) {
            case Dev::Kind::C:
                dstate_[d.st] = vab;  // no current at DC, esr drop is zero
                dstate_[d.st + 1] = 0.0;
                break;
            case Dev::Kind::L: {
                const double i = x_[cc_.n_nodes + d.branch];
                dstate_[d.st] = i;
                dstate_[d.st + 1] = vab - d.p2 * i;
                if (d.st2 >= 0) {
                    dstate_[d.st2] = vab;
                    dstate_[d.st2 + 1] = 0.0;
                }
                break;
            }
            case Dev::Kind::V: {
                const double i = x_[cc_.n_nodes + d.branch];
                dstate_[d.st] = i;
                dstate_[d.st + 1] = 0.0;
                break;
            }
            default:
                break;
        }
    }
}

// Signed current flowing a -> b through the device at the current solution.
double Engine::device_current(const Dev& d, double t, double dt, Method m,
                              const double* old_state) const {
    switch (d.kind) {
        case Dev::Kind::R:
            return d.p1 * (vx(d.a) - vx(d.b));
        case Dev::Kind::C:
            return dstate_[d.st + 1];
        case Dev::Kind::L:
            return x_[cc_.n_nodes + d.branch];
        case Dev::Kind::D:
            return diode_eval(d.dio, vx(d.a) - vx(d.b)).i;
        case Dev::Kind::S:
            // Same step-average the solve used, so the reported current
            // satisfies the solved KCL exactly. dt == 0 happens only for
            // the initial sample (instantaneous value).
            return switch_conductance_avg(d.sw, t - dt, t) * (vx(d.a) - vx(d.b));
        case Dev::Kind::V:
            return x_[cc_.n_nodes + d.branch];
    }
    (void)dt;
    (void)m;
    (void)old_state;
    return 0.0;
}

double Engine::stored_energy() const {
    double e = 0.0;
    for (const auto& d : cc_.devs) {
        switch (d.kind) {
            case Dev::Kind::C:
                e += 0.5 * d.p1 * dstate_[d.st] * dstate_[d.st];
                break;
            case Dev::Kind::L:
                e += 0.5 * d.p1 * dstate_[d.st] * dstate_[d.st];
                if (d.st2 >= 0)
                    e += 0.5 * d.p3 * dstate_[d.st2] * dstate_[d.st2];
                break;
            case Dev::Kind::V:
                if (d.p3 > 0) e += 0.5 * d.p3 * dstate_[d.st] * dstate_[d.st];
                break;
            default:
                break;
        }
    }
    return e;
}

void Engine::accumulate_step_stats(double t, double dt, Method m,
                                   const std::vector<double>& old_state) {
    std::fill(kcl_.begin(), kcl_.end(), 0.0);
    std::fill(kcl_abs_.begin(), kcl_abs_.end(), 0.0);
    for (std::size_t k = 0; k < cc_.devs.size(); ++k) {
        const Dev& d = cc_.devs[k];
        const double vab = vx(d.a) - vx(d.b);
        const double i = device_current(d, t, dt, m, old_state.data());
        if (d.a >= 0) {
            kcl_[d.a] += i;
            kcl_abs_[d.a] += std::fabs(i);
        }
        if (d.b >= 0) {
            kcl_[d.b] -= i;
            kcl_abs_[d.b] += std::fabs(i);
        }
        if (d.st2 >= 0) {  // epc current is a separate path
            const double i2 = dstate_[d.st2 + 1];
            if (d.a >= 0) {
                kcl_[d.a] += i2;
                kcl_abs_[d.a] += std::fabs(i2);
            }
            if (d.b >= 0) {
                kcl_[d.b] -= i2;
                kcl_abs_[d.b] += std::fabs(i2);
            }
        }

        double p_diss = 0.0, p_src = 0.0;
        switch (d.kind) {
            case Dev::Kind::R:
            case Dev::Kind::S:
                p_diss = vab * i;
                break;
            case Dev::Kind::C:
            case Dev::Kind::L:
                p_diss = d.p2 * i * i;
                break;
            case Dev::Kind::D:
                p_diss = vab * i;
                break;
            case Dev::Kind::V:
                p_diss = d.p2 * i * i;
                p_src = -d.p1 * i;  // positive while delivering
                break;
        }
        e_diss_[k] += 0.5 * (p_diss_prev_[k] + p_diss) * dt;
        e_src_[k] += 0.5 * (p_src_prev_[k] + p_src) * dt;
        p_diss_prev_[k] = p_diss;
        p_src_prev_[k] = p_src;
    }
    for (int n = 0; n < cc_.n_nodes; ++n) {
        const double ratio =
            std::fabs(kcl_[n]) / (1e-9 + opts_.reltol * kcl_abs_[n]);
        if (ratio > stats_.max_kcl_ratio) stats_.max_kcl_ratio = ratio;
    }
}

TransientResult Engine::run() {
    double tstop = 0.0, dtmax = 0.0;
    if (opts_.tstop)
        tstop = *opts_.tstop;
    else if (ckt_.directives.tran)
        tstop = ckt_.directives.tran->tstop;
    else
        throw std::invalid_argument("transient_run: no .tran directive and no tstop override");
    if (opts_.dtmax)
        dtmax = *opts_.dtmax;
    else if (ckt_.directives.tran)
        dtmax = ckt_.directives.tran->dtmax;
    else
        throw std::invalid_argument("transient_run: no .tran directive and no dtmax override");
    if (dtmax <= 0 || tstop <= 0)
        throw std::invalid_argument("transient_run: tstop and dtmax must be positive");

    double t0 = 0.0;
    if (opts_.resume) {
        if (opts_.resume->x.size() != static_cast<std::size_t>(cc_.nx()) ||
            opts_.resume->dstate.size() != static_cast<std::size_t>(cc_.n_state))
            throw std::invalid_argument("transient_run: resume snapshot does not match circuit");
        t0 = opts_.resume->t;
        x_ = opts_.resume->x;
        dstate_ = opts_.resume->dstate;
        if (tstop <= t0)
            throw std::invalid_argument("transient_run: tstop must lie beyond the resume time");
    } else {
        init_states_from_dc(solve_dc());
    }

    const auto bps = breakpoint_schedule(ckt_, t0, tstop);
    const auto channels = make_channels(ckt_, cc_);

    TransientResult result;
    Waveforms& w = result.waves;
    const std::size_t est =
        static_cast<std::size_t>((tstop - t0) / dtmax) + bps.size() + 16;
    w.times.reserve(est);
    for (const auto& ch : channels) {
        w.names.push_back(ch.label);
        w.data.emplace_back();
        w.data.back().reserve(est);
    }

    auto record = [&](double t, double dt, Method m,
                      const std::vector<double>& old_state) {
        w.times.push_back(t);
        for (std::size_t i = 0; i < channels.size(); ++i) {
            const auto& ch = channels[i];
            double v = 0.0;
            switch (ch.kind) {
                case ChannelDef::Kind::NodeV:
                    v = vx(ch.a);
                    break;
                case ChannelDef::Kind::DiffV:
                    v = vx(ch.a) - vx(ch.b);
                    break;
                case ChannelDef::Kind::DevI:
                    v = device_current(cc_.devs[ch.dev], t, dt, m, old_state.data());
                    break;
            }
            w.data[i].push_back(v);
        }
    };

    stats_ = RunStats{};
    stats_.energy.e_stored_initial = stored_energy();

    // Seed the power trapezoids with the t0 values.
    std::vector<double> old_state = dstate_;
    accumulate_step_stats(t0, 0.0, opts_.method, old_state);
    stats_.max_kcl_ratio = 0.0;  // t0 reflects the dc/resume point, not a step
    record(t0, 0.0, opts_.method, old_state);

    double t = t0;
    bool force_be = true;
    std::size_t bp_i = 1;  // bps[0] == t0
    std::vector<double> state_at_bp;

    while (bp_i < bps.size()) {
        const double target = bps[bp_i];
        // Each segment between breakpoints is cut into a uniform integer
        // grid. Grid points are computed by multiplication, never by
        // accumulating t += dt, so the last step lands exactly on the
        // breakpoint and the step size cannot collapse to a rounding
        // sliver (which would poison the mna scaling).
        const double seg_start = t;
        const double span = target - seg_start;
        const auto n_grid = span > 0.0
                                ? std::max<std::uint64_t>(
                                      1, static_cast<std::uint64_t>(
                                             std::ceil(span / dtmax - 1e-9)))
                                : 0;
        const double h = n_grid ? span / static_cast<double>(n_grid) : 0.0;
        for (std::uint64_t k = 1; k <= n_grid; ++k) {
            const double grid =
                k == n_grid ? target : seg_start + h * static_cast<double>(k);
            while (t < grid) {
                // Halved steps re-approach the same grid point, so dt is
                // never smaller than h / 2^max_step_halvings.
                double t_next = grid;
                double dt = t_next - t;
                const Method m = force_be ? Method::BE : opts_.method;

                int halvings = 0;
                for (;;) {
                    build_base(t_next, dt, m);
                    if (newton_step() > 0) break;
                    ++halvings;
                    ++stats_.step_halvings;
                    if (halvings > opts_.max_step_halvings)
                        throw SimulationError(
                            t, "newton did not converge; step halved " +
                                   std::to_string(halvings - 1) + " times");
                    dt *= 0.5;
                    t_next = t + dt;
                }

                old_state = dstate_;
                update_states(dt, m);
                t = t_next;
                ++stats_.steps;
                force_be = false;
                accumulate_step_stats(t, dt, m, old_state);
                record(t, dt, m, old_state);
            }
        }
        // Landed on a breakpoint: the integrator state must carry over
        // untouched; the next step restarts with backward Euler.
        state_at_bp = dstate_;
        force_be = true;
        ++bp_i;
        for (std::size_t i = 0; i < dstate_.size(); ++i) {
            const double jump = std::fabs(dstate_[i] - state_at_bp[i]);
            if (jump > stats_.max_breakpoint_state_jump)
                stats_.max_breakpoint_state_jump = jump;
        }
    }

    stats_.energy.e_stored_final = stored_energy();
    for (std::size_t k = 0; k < cc_.devs.size(); ++k) {
        stats_.energy.e_source += e_src_[k];
        if (cc_.devs[k].is_load)
            stats_.energy.e_load += e_diss_[k];
        else
            stats_.energy.e_dissipated += e_diss_[k];
        if (e_diss_[k] != 0.0)
            stats_.energy.dissipated_by_device[cc_.devs[k].name] = e_diss_[k];
    }
    const double balance = stats_.energy.e_source - stats_.energy.e_load -
                           stats_.energy.e_dissipated -
                           (stats_.energy.e_stored_final -
                            stats_.energy.e_stored_initial);
    const double denom = std::max({std::fabs(stats_.energy.e_source),
                                   stats_.energy.e_stored_initial, 1e-30});
    stats_.energy.residual_frac = std::fabs(balance) / denom;

    result.stats = stats_;
    result.final_state.t = t;
    result.final_state.x = x_;
    result.final_state.dstate = dstate_;
    return result;
}

}  // namespace

// ------------------------------------------------------------------ public

std::vector<double> breakpoint_schedule(const Circuit& c, double t0, double tstop) {
    if (tstop <= t0)
        throw std::invalid_argument("breakpoint_schedule: tstop must exceed t0");
    std::vector<double> bps{t0, tstop};
    for (const auto& d : c.devices) {
        const auto* s = std::get_if<Switch>(&d.model);
        if (!s) continue;
        const PwmControl& p = s->ctrl;
        const double T = 1.0 / p.freq;
        const double events[4] = {0.0, p.trise, p.duty * T, p.duty * T + p.tfall};
        const long k0 = static_cast<long>(std::floor((t0 - p.phase) / T)) - 1;
        const long k1 = static_cast<long>(std::ceil((tstop - p.phase) / T)) + 1;
        for (long k = k0; k <= k1; ++k) {
            const double base = p.phase + static_cast<double>(k) * T;
            for (double ev : events) {
                const double te = base + ev;
                if (te > t0 && te < tstop) bps.push_back(te);
            }
        }
    }
    std::sort(bps.begin(), bps.end());
    std::vector<double> out;
    out.reserve(bps.size());
    for (double b : bps)
        if (out.empty() || b - out.back() > 1e-15) out.push_back(b);
    return out;
}

DcSolution dc_operating_point(const Circuit& c, const SolverOptions& opts) {
    Engine e(c, opts);
    return e.dc_solution();
}

TransientResult transient_run(const Circuit& c, const SolverOptions& opts) {
    Engine e(c, opts);
    return e.run();
}

MnaDebug assemble_dc_debug(const Circuit& c) {
    const Compiled cc = compile(c);
    const int nx = cc.nx();
    MnaDebug dbg;
    dbg.a.assign(nx * nx, 0.0);
    dbg.rhs.assign(nx, 0.0);
    for (int i = 0; i < cc.n_nodes; ++i)
        dbg.unknowns.push_back("v(" + cc.node_names[i] + ")");
    std::vector<std::string> branch_names(cc.n_branch);
    for (const auto& d : cc.devs)
        if (d.branch >= 0) branch_names[d.branch] = "i(" + d.name + ")";
    for (const auto& n : branch_names) dbg.unknowns.push_back(n);

    for (const auto& d : cc.devs) {
        const int row = cc.n_nodes + d.branch;
        switch (d.kind) {
            case Dev::Kind::R:
                stamp_g(dbg.a, nx, d.a, d.b, d.p1);
                break;
            case Dev::Kind::C:
                break;
            case Dev::Kind::L:
            case Dev::Kind::V:
                if (d.a >= 0) {
                    dbg.a[row * nx + d.a] += 1.0;
                    dbg.a[d.a * nx + row] += 1.0;
                }
                if (d.b >= 0) {
                    dbg.a[row * nx + d.b] -= 1.0;
                    dbg.a[d.b * nx + row] -= 1.0;
                }
                dbg.a[row * nx + row] -= d.p2;
                dbg.rhs[row] = d.kind == Dev::Kind::V ? d.p1 : 0.0;
                break;
            case Dev::Kind::D: {
                const auto [i0, g0] = diode_eval(d.dio, 0.0);
                (void)i0;
                stamp_g(dbg.a, nx, d.a, d.b, g0);
                break;
            }
            case Dev::Kind::S:
                stamp_g(dbg.a, nx, d.a, d.b, switch_conductance(d.sw, 0.0));
                break;
        }
    }
    return dbg;
}

}  // namespace smpsim
