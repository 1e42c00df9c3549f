// smpsim command line tool: run simulations, post-process waveform CSVs,
// compare spectra, and sweep the built-in converter presets.
//
// Exit codes: 0 success, 1 simulation/numeric failure, 2 usage or IO error.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "smpsim/analysis.hpp"
#include "smpsim/engine.hpp"
#include "smpsim/io.hpp"
#include "smpsim/netlist.hpp"
#include "smpsim/scenarios.hpp"

namespace {

using nlohmann::json;
using namespace smpsim;

double parse_quantity(const std::string& flag, const std::string& text) {
    try {
        return parse_value(text);
    } catch (const std::exception&) {
        throw std::invalid_argument(flag + ": cannot parse value '" + text + "'");
    }
}

/// Values shared by `run` and `phases`: preset parameter overrides plus the
/// flags that pick them up.  All quantity flags accept SI suffixes (200k, 5u).
struct PresetOverrides {
    std::string vin, fsw, duty, l_main, c_out, r_load;

    void attach(CLI::App* cmd) {
        cmd->add_option("--vin", vin, "Input source voltage override, V");
        cmd->add_option("--fsw", fsw, "Switching frequency override, Hz");
        cmd->add_option("--duty", duty, "Switch duty cycle override (0, 1)");
        cmd->add_option("--l-main", l_main, "Main inductor override, H");
        cmd->add_option("--c-out", c_out, "Output capacitor override, F");
        cmd->add_option("--r-load", r_load, "Load resistor override, ohm");
    }
    bool any() const {
        return !(vin.empty() && fsw.empty() && duty.empty() && l_main.empty() &&
                 c_out.empty() && r_load.empty());
    }
    BuckParams apply(BuckParams p) const {
        if (!vin.empty()) p.vin = parse_quantity("--vin", vin);
        if (!fsw.empty()) p.fsw = parse_quantity("--fsw", fsw);
        if (!duty.empty()) p.duty = parse_quantity("--duty", duty);
        if (!l_main.empty()) p.l_main = parse_quantity("--l-main", l_main);
        if (!c_out.empty()) p.c_out = parse_quantity("--c-out", c_out);
        if (!r_load.empty()) p.r_load = parse_quantity("--r-load", r_load);
        return p;
    }
};

int preset_number(const std::string& input) {
    if (input.size() == 6 && input.rfind("phase", 0) == 0 && input[5] >= '1' &&
        input[5] <= '6')
        return input[5] - '0';
    return 0;
}

WindowKind parse_window(const std::string& w) {
    if (w == "hann") return WindowKind::Hann;
    if (w == "rect") return WindowKind::Rect;
    throw std::invalid_argument("--window must be 'hann' or 'rect', got '" + w + "'");
}

/// Channel used for metrics when none is requested: the filtered output if
/// present, then the converter output, then the first recorded channel.
std::string pick_channel(const Waveforms& w, const std::string& requested) {
    if (!requested.empty()) {
        if (!w.has_channel(requested))
            throw std::invalid_argument("channel '" + requested +
                                        "' is not in the record");
        return requested;
    }
    if (w.has_channel("v(vout_f)")) return "v(vout_f)";
    if (w.has_channel("v(out)")) return "v(out)";
    if (w.names.empty()) throw std::invalid_argument("record has no channels");
    return w.names.front();
}

/// Channel the output metrics should read. An explicit request is honored
/// verbatim; otherwise the picked output voltage is replaced by the load
/// differential when the record also holds the converter's local return
/// rail, whose bounce on the LISN inductors is not part of the load ripple.
std::string metrics_channel(Waveforms& w, const std::string& requested) {
    std::string ch = pick_channel(w, requested);
    if (requested.empty() && ch != "v(ncvt)" && w.has_channel("v(ncvt)"))
        ch = append_difference(w, ch, "v(ncvt)");
    return ch;
}

/// Trailing moving-average span for settling detection: one switching
/// period when the circuit switches, otherwise no smoothing.
double settling_avg_window(const Circuit& c) {
    for (const auto& d : c.devices)
        if (const auto* sw = std::get_if<Switch>(&d.model))
            if (sw->ctrl.freq > 0) return 1.0 / sw->ctrl.freq;
    return 0.0;
}

json metrics_json(const RippleMetrics& m, std::optional<double> settling,
                  const EnergyReport& e) {
    json j;
    j["schema_version"] = 1;
    j["mean_v"] = m.mean;
    j["ripple_pp_v"] = m.ripple_pp;
    j["ripple_rms_v"] = m.ripple_rms;
    j["settling_time_s"] = settling ? *settling : -1.0;
    j["energy_source_j"] = e.e_source;
    j["energy_load_j"] = e.e_load;
    j["energy_dissipated_j"] = e.e_dissipated;
    j["residual_frac"] = e.residual_frac;
    return j;
}

std::string fmt_e(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.12e", v);
    return b;
}

std::string fmt_g(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.6g", v);
    return b;
}

// ------------------------------------------------------------------- run

struct RunArgs {
    std::string input;
    PresetOverrides over;
    std::string tstop, dtmax;
    std::string waves_path, metrics_path, spectrum_path, svg_path;
    std::string channel;
    std::string window = "hann";
    std::string fft_start;
};

int cmd_run(const RunArgs& a) {
    Circuit c;
    double preset_fsw = 0.0;
    if (int n = preset_number(a.input)) {
        BuckParams p = a.over.apply(BuckParams{});
        c = phase_preset(n, p);
        preset_fsw = p.fsw;
    } else {
        if (a.over.any())
            throw std::invalid_argument(
                "parameter overrides (--vin, --fsw, ...) apply to presets only");
        if (!std::filesystem::exists(a.input))
            throw std::invalid_argument("cannot open netlist '" + a.input + "'");
        c = parse_netlist(io::read_text(a.input));
        for (const auto& f : validate_circuit(c))
            std::cerr << "warning: " << f.message << "\n";
    }

    SolverOptions opts;
    if (!a.tstop.empty()) opts.tstop = parse_quantity("--tstop", a.tstop);
    if (!a.dtmax.empty()) opts.dtmax = parse_quantity("--dtmax", a.dtmax);

    TransientResult r = transient_run(c, opts);
    Waveforms& w = r.waves;

    if (!a.waves_path.empty()) io::write_waveforms_csv(a.waves_path, w);

    const std::string ch = metrics_channel(w, a.channel);
    const double t0 = w.times.front(), t1 = w.times.back();
    const double m_start = t0 + 0.75 * (t1 - t0);
    RippleMetrics m = ripple_metrics(w, ch, m_start, t1);
    const double avg_win = preset_fsw > 0 ? 1.0 / preset_fsw : settling_avg_window(c);
    std::optional<double> settling = settling_time(w, ch, 0.02, avg_win);

    if (!a.metrics_path.empty()) {
        io::write_text_atomic(a.metrics_path,
                              metrics_json(m, settling, r.stats.energy).dump(2) + "\n");
    }

    if (!a.spectrum_path.empty()) {
        const double fs = a.fft_start.empty() ? m_start
                                              : parse_quantity("--fft-start", a.fft_start);
        Spectrum s = compute_spectrum(w, ch, parse_window(a.window), fs);
        io::write_spectrum_csv(a.spectrum_path, s);
    }
    if (!a.svg_path.empty()) {
        io::write_plot_svg(a.svg_path, w.times, w.channel(ch), c.title + " " + ch,
                           "time (s)", ch + " (V or A)");
    }

    std::cout << "channel " << ch << ": mean " << fmt_g(m.mean) << " V, ripple pp "
              << fmt_g(m.ripple_pp) << " V, rms " << fmt_g(m.ripple_rms)
              << " V, settling "
              << (settling ? fmt_g(*settling) + " s" : std::string("none"))
              << ", energy residual " << fmt_g(r.stats.energy.residual_frac) << "\n";
    return 0;
}

// ------------------------------------------------------------------- fft

struct FftArgs {
    std::string input;
    std::string channel;
    std::string window = "hann";
    std::string start;
    std::string out_path, svg_path;
};

int cmd_fft(const FftArgs& a) {
    if (!std::filesystem::exists(a.input))
        throw std::invalid_argument("cannot open waveform CSV '" + a.input + "'");
    Waveforms w = io::read_waveforms_csv(a.input);
    const std::string ch = pick_channel(w, a.channel);
    const double t_start =
        a.start.empty() ? w.times.front() : parse_quantity("--start", a.start);
    Spectrum s = compute_spectrum(w, ch, parse_window(a.window), t_start);
    io::write_spectrum_csv(a.out_path, s);
    if (!a.svg_path.empty())
        io::write_plot_svg(a.svg_path, s.freqs, s.amplitudes,
                           "amplitude spectrum of " + ch, "frequency (Hz)",
                           "amplitude (V)", true);
    std::cout << "spectrum of " << ch << ": " << s.freqs.size() << " bins, "
              << fmt_g(s.resolution) << " Hz resolution\n";
    return 0;
}

// ----------------------------------------------------------------- compare

struct CompareArgs {
    std::string a_path, b_path;
    std::string out_path;
};

int cmd_compare(const CompareArgs& args) {
    for (const auto* p : {&args.a_path, &args.b_path})
        if (!std::filesystem::exists(*p))
            throw std::invalid_argument("cannot open spectrum CSV '" + *p + "'");
    Spectrum a = io::read_spectrum_csv(args.a_path);
    Spectrum b = io::read_spectrum_csv(args.b_path);
    AttenuationRecord rec = spectrum_attenuation(a, b);
    if (!args.out_path.empty()) io::write_attenuation_csv(args.out_path, rec);

    if (rec.rebinned)
        std::cout << "note: grids differ, second spectrum re-binned onto the "
                     "first one's grid\n";

    // Local maxima of spectrum a, largest first.
    std::vector<std::size_t> peaks;
    for (std::size_t k = 1; k + 1 < a.amplitudes.size(); ++k)
        if (a.amplitudes[k] >= a.amplitudes[k - 1] &&
            a.amplitudes[k] >= a.amplitudes[k + 1])
            peaks.push_back(k);
    std::sort(peaks.begin(), peaks.end(), [&](std::size_t i, std::size_t j) {
        if (a.amplitudes[i] != a.amplitudes[j])
            return a.amplitudes[i] > a.amplitudes[j];
        return i < j;
    });
    if (peaks.size() > 10) peaks.resize(10);
    std::sort(peaks.begin(), peaks.end());

    std::cout << "attenuation at the largest peaks of the first spectrum:\n";
    for (std::size_t k : peaks)
        std::cout << "  " << fmt_g(a.freqs[k]) << " Hz  " << fmt_g(a.amplitudes[k])
                  << " V  " << fmt_g(rec.db[k]) << " dB\n";
    return 0;
}

// ------------------------------------------------------------------ phases

struct PhasesArgs {
    std::string out_dir;
    PresetOverrides over;
    std::string tstop = "20m";
    std::string measure = "400u";
    std::string dtmax = "5n";
};

struct PhaseRow {
    RippleMetrics metrics;
    std::optional<double> settling;
    std::optional<double> port_peak;
    EnergyReport energy;
    std::string title;
};

// One uninterrupted run per preset: a shared step limit from t = 0 keeps
// every phase on the same footing, the slow input/output modes are long
// settled by the end, and the metrics read the trailing measure window.
PhaseRow run_phase(int n, const BuckParams& p, double tstop, double measure,
                   double dtmax) {
    Circuit c = phase_preset(n, p);

    // Record only what the report needs; the energy ledger comes from the
    // engine and does not depend on probes.
    c.directives.probes.clear();
    c.directives.probes.push_back({Probe::Kind::NodeVoltage, "out", ""});
    if (c.has_node("vout_f"))
        c.directives.probes.push_back({Probe::Kind::NodeVoltage, "vout_f", ""});
    if (c.has_node("ncvt"))
        c.directives.probes.push_back({Probe::Kind::NodeVoltage, "ncvt", ""});
    if (c.has_node("lisnp_port"))
        c.directives.probes.push_back({Probe::Kind::NodeVoltage, "lisnp_port", ""});

    SolverOptions opts;
    opts.tstop = tstop;
    opts.dtmax = dtmax;
    TransientResult res = transient_run(c, opts);

    PhaseRow row;
    row.title = c.title;
    const std::string ch = metrics_channel(res.waves, "");
    row.settling = settling_time(res.waves, ch, 0.02, 1.0 / p.fsw);
    const double t_meas = res.waves.times.back() - measure;
    row.metrics =
        ripple_metrics(res.waves, ch, t_meas, res.waves.times.back());
    row.energy = res.stats.energy;
    if (res.waves.has_channel("v(lisnp_port)")) {
        Spectrum s = compute_spectrum(res.waves, "v(lisnp_port)",
                                      WindowKind::Hann, t_meas);
        row.port_peak = spectrum_peak(s, p.fsw);
    }
    return row;
}

int cmd_phases(const PhasesArgs& a) {
    const double tstop = parse_quantity("--tstop", a.tstop);
    const double measure = parse_quantity("--measure", a.measure);
    const double dtmax = parse_quantity("--dtmax", a.dtmax);
    if (tstop <= 0 || measure <= 0 || dtmax <= 0)
        throw std::invalid_argument("--tstop, --measure and --dtmax must be > 0");
    if (measure >= tstop)
        throw std::invalid_argument("--measure must be shorter than --tstop");
    const BuckParams p = a.over.apply(BuckParams{});

    std::error_code ec;
    std::filesystem::create_directories(a.out_dir, ec);
    if (ec)
        throw std::invalid_argument("cannot create output directory '" + a.out_dir +
                                    "': " + ec.message());

    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SMPSIM_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) threads = static_cast<unsigned>(v);
    }
    threads = std::min(threads, 6u);

    std::vector<PhaseRow> rows(6);
    std::vector<std::exception_ptr> errors(6);
    std::atomic<int> next{1};
    auto worker = [&] {
        for (int n = next.fetch_add(1); n <= 6; n = next.fetch_add(1)) {
            try {
                rows[n - 1] = run_phase(n, p, tstop, measure, dtmax);
            } catch (...) {
                errors[n - 1] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    const std::filesystem::path dir(a.out_dir);
    std::string csv = "phase,mean_v,ripple_pp_v,ripple_rms_v,settling_time_s,"
                      "port_peak_fsw_v\n";
    std::string md = "# converter phase sweep\n\n";
    md += "Six converter presets, each simulated in one pass to " +
          format_value(tstop) + "s with a shared " + format_value(dtmax) +
          "s step limit; ripple metrics read the final " + format_value(measure) +
          "s. Output metrics use the filtered output node where one exists; "
          "the port peak reads the measurement-port spectrum at the " +
          format_value(p.fsw) + "Hz switching frequency.\n\n";
    md += "| phase | preset | mean (V) | ripple pp (V) | ripple rms (V) | "
          "settling (s) | port peak at fsw (V) |\n";
    md += "|---|---|---|---|---|---|---|\n";

    for (int n = 1; n <= 6; ++n) {
        const PhaseRow& r = rows[n - 1];
        const double st = r.settling ? *r.settling : -1.0;
        csv += std::to_string(n) + "," + fmt_e(r.metrics.mean) + "," +
               fmt_e(r.metrics.ripple_pp) + "," + fmt_e(r.metrics.ripple_rms) + "," +
               fmt_e(st) + "," + (r.port_peak ? fmt_e(*r.port_peak) : "") + "\n";
        md += "| " + std::to_string(n) + " | " + r.title + " | " +
              fmt_g(r.metrics.mean) + " | " + fmt_g(r.metrics.ripple_pp) + " | " +
              fmt_g(r.metrics.ripple_rms) + " | " + fmt_g(st) + " | " +
              (r.port_peak ? fmt_g(*r.port_peak) : "-") + " |\n";

        io::write_text_atomic(
            dir / ("metrics_phase" + std::to_string(n) + ".json"),
            metrics_json(r.metrics, r.settling, r.energy).dump(2) + "\n");
    }
    io::write_text_atomic(dir / "report.csv", csv);
    io::write_text_atomic(dir / "report.md", md);
    std::cout << "wrote report.csv, report.md and 6 metrics files to " << a.out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"switched-mode power supply transient simulator and conducted "
                 "noise toolkit",
                 "smpsim"};
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand(
        "run", "Simulate a netlist file or a built-in preset (phase1..phase6)");
    run->add_option("input", run_args.input, "Netlist path or preset name")
        ->required();
    run->add_option("--tstop", run_args.tstop, "Stop time override, s");
    run->add_option("--dtmax", run_args.dtmax, "Maximum step override, s");
    run->add_option("--waves", run_args.waves_path, "Write waveform CSV here");
    run->add_option("--metrics", run_args.metrics_path, "Write metrics JSON here");
    run->add_option("--spectrum", run_args.spectrum_path, "Write spectrum CSV here");
    run->add_option("--svg", run_args.svg_path, "Write a waveform plot here");
    run->add_option("--channel", run_args.channel,
                    "Channel for metrics/spectrum (default: filtered output)");
    run->add_option("--window", run_args.window, "Spectrum window: hann or rect")
        ->capture_default_str();
    run->add_option("--fft-start", run_args.fft_start,
                    "Spectrum start time, s (default: last quarter)");
    run_args.over.attach(run);

    FftArgs fft_args;
    CLI::App* fft = app.add_subcommand("fft", "Amplitude spectrum of a waveform CSV");
    fft->add_option("input", fft_args.input, "Waveform CSV path")->required();
    fft->add_option("--channel", fft_args.channel,
                    "Channel to transform (default: filtered output)");
    fft->add_option("--window", fft_args.window, "Window: hann or rect")
        ->capture_default_str();
    fft->add_option("--start", fft_args.start, "Start time, s (default: record start)");
    fft->add_option("--out", fft_args.out_path, "Write spectrum CSV here")->required();
    fft->add_option("--svg", fft_args.svg_path, "Write a log-frequency plot here");

    CompareArgs cmp_args;
    CLI::App* cmp = app.add_subcommand(
        "compare", "Per-bin attenuation of one spectrum CSV against another");
    cmp->add_option("spec_a", cmp_args.a_path, "Reference spectrum CSV")->required();
    cmp->add_option("spec_b", cmp_args.b_path, "Spectrum CSV to compare")->required();
    cmp->add_option("--out", cmp_args.out_path, "Write attenuation CSV here");

    PhasesArgs ph_args;
    CLI::App* ph = app.add_subcommand(
        "phases", "Run all six presets and write a combined report");
    ph->add_option("output_dir", ph_args.out_dir, "Directory for report files")
        ->required();
    ph->add_option("--tstop", ph_args.tstop, "Simulated time per preset, s")
        ->capture_default_str();
    ph->add_option("--measure", ph_args.measure,
                   "Trailing window the ripple metrics read, s")
        ->capture_default_str();
    ph->add_option("--dtmax", ph_args.dtmax,
                   "Step limit shared by all presets, s")
        ->capture_default_str();
    ph_args.over.attach(ph);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (fft->parsed()) return cmd_fft(fft_args);
        if (cmp->parsed()) return cmd_compare(cmp_args);
        if (ph->parsed()) return cmd_phases(ph_args);
        return 2;
    } catch (const SimulationError& e) {
        std::cerr << "simulation failed: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "netlist error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
