#include "smpsim/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace smpsim::io {

namespace {

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
    static std::mt19937_64 rng{std::random_device{}()};
    const auto tag = rng();
    char buf[32];
    std::snprintf(buf, sizeof buf, ".tmp%016llx",
                  static_cast<unsigned long long>(tag));
    std::filesystem::path p = path;
    p += buf;
    return p;
}

void rename_over(const std::filesystem::path& tmp,
                 const std::filesystem::path& path) {
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot move temp file onto '" + path.string() +
                                 "': " + ec.message());
    }
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_field(const std::string& s, const std::filesystem::path& path,
                   std::size_t lineno) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": not a number: '" + s + "'");
    return v;
}

class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path)
        : path_(path), tmp_(temp_sibling(path)), out_(tmp_, std::ios::binary) {
        if (!out_)
            throw std::runtime_error("cannot open '" + tmp_.string() + "' for writing");
        buf_.reserve(1 << 20);
    }
    ~CsvWriter() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }
    void raw(std::string_view s) {
        buf_.append(s);
        if (buf_.size() > (1u << 20) - 512) flush();
    }
    void number(double v) {
        char b[40];
        const int len = std::snprintf(b, sizeof b, "%.12e", v);
        buf_.append(b, static_cast<std::size_t>(len));
        if (buf_.size() > (1u << 20) - 512) flush();
    }
    void commit() {
        flush();
        out_.close();
        if (!out_) throw std::runtime_error("write failed on '" + tmp_.string() + "'");
        rename_over(tmp_, path_);
        committed_ = true;
    }

  private:
    void flush() {
        out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        buf_.clear();
    }
    std::filesystem::path path_, tmp_;
    std::ofstream out_;
    std::string buf_;
    bool committed_ = false;
};

}  // namespace

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    const auto tmp = temp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed on '" + tmp.string() + "'");
        }
    }
    rename_over(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_waveforms_csv(const std::filesystem::path& path, const Waveforms& w) {
    CsvWriter out(path);
    out.raw("time");
    for (const auto& n : w.names) {
        out.raw(",");
        out.raw(csv_quote(n));
    }
    out.raw("\n");
    for (std::size_t k = 0; k < w.times.size(); ++k) {
        out.number(w.times[k]);
        for (const auto& col : w.data) {
            out.raw(",");
            out.number(col[k]);
        }
        out.raw("\n");
    }
    out.commit();
}

Waveforms read_waveforms_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path.string() + ": empty file");
    auto header = split_csv_row(line);
    if (header.empty() || header[0] != "time")
        throw std::runtime_error(path.string() + ": first column must be 'time'");

    Waveforms w;
    w.names.assign(header.begin() + 1, header.end());
    w.data.resize(w.names.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto row = split_csv_row(line);
        if (row.size() != header.size())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(header.size()) +
                                     " fields, got " + std::to_string(row.size()));
        w.times.push_back(parse_field(row[0], path, lineno));
        for (std::size_t c = 0; c < w.data.size(); ++c)
            w.data[c].push_back(parse_field(row[c + 1], path, lineno));
    }
    if (w.times.empty())
        throw std::runtime_error(path.string() + ": no data rows");
    return w;
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s) {
    CsvWriter out(path);
    out.raw("freq_hz,amplitude_v\n");
    for (std::size_t k = 0; k < s.freqs.size(); ++k) {
        out.number(s.freqs[k]);
        out.raw(",");
        out.number(s.amplitudes[k]);
        out.raw("\n");
    }
    out.commit();
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path.string() + ": empty file");
    auto header = split_csv_row(line);
    if (header.size() != 2 || header[0] != "freq_hz" || header[1] != "amplitude_v")
        throw std::runtime_error(path.string() + ": expected header freq_hz,amplitude_v");

    Spectrum s;
    s.window = WindowKind::Rect;  // the file format does not carry the window
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto row = split_csv_row(line);
        if (row.size() != 2)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected 2 fields");
        s.freqs.push_back(parse_field(row[0], path, lineno));
        s.amplitudes.push_back(parse_field(row[1], path, lineno));
    }
    if (s.freqs.size() < 2)
        throw std::runtime_error(path.string() + ": fewer than 2 bins");
    s.resolution = s.freqs[1] - s.freqs[0];
    return s;
}

void write_attenuation_csv(const std::filesystem::path& path,
                           const AttenuationRecord& r) {
    CsvWriter out(path);
    out.raw("freq_hz,attenuation_db\n");
    for (std::size_t k = 0; k < r.freqs.size(); ++k) {
        out.number(r.freqs[k]);
        out.raw(",");
        out.number(r.db[k]);
        out.raw("\n");
    }
    out.commit();
}

// --------------------------------------------------------------------- SVG

namespace {

struct Ticks {
    std::vector<double> values;
};

Ticks nice_ticks(double lo, double hi, int target) {
    Ticks t;
    if (!(hi > lo)) {
        t.values = {lo};
        return t;
    }
    const double raw = (hi - lo) / std::max(1, target);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    }
    const double first = std::ceil(lo / step) * step;
    for (double v = first; v <= hi + 0.5 * step; v += step) t.values.push_back(v);
    return t;
}

std::string fmt_g(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

}  // namespace

void write_plot_svg(const std::filesystem::path& path,
                    const std::vector<double>& x, const std::vector<double>& y,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label, bool logx) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("write_plot_svg: need two or more points");

    const double W = 960, H = 540, ml = 78, mr = 24, mt = 48, mb = 56;
    const double pw = W - ml - mr, ph = H - mt - mb;

    auto xval = [&](double v) { return logx ? std::log10(std::max(v, 1e-30)) : v; };
    double x0 = xval(x.front()), x1 = xval(x.back());
    if (logx && x.front() <= 0 && x.size() > 1) x0 = xval(x[1]);  // skip DC bin
    double y0 = y[0], y1 = y[0];
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!logx || x[i] > 0) {
            y0 = std::min(y0, y[i]);
            y1 = std::max(y1, y[i]);
        }
    }
    if (y1 <= y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    const double ypad = 0.05 * (y1 - y0);
    y0 -= ypad;
    y1 += ypad;

    auto sx = [&](double v) { return ml + (xval(v) - x0) / (x1 - x0) * pw; };
    auto sy = [&](double v) { return mt + (y1 - v) / (y1 - y0) * ph; };

    // Min/max decimation per horizontal pixel bucket.
    std::string pts;
    const std::size_t buckets = 1400;
    if (x.size() <= 2 * buckets) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (logx && x[i] <= 0) continue;
            pts += fmt_g(sx(x[i])) + "," + fmt_g(sy(y[i])) + " ";
        }
    } else {
        const std::size_t per = x.size() / buckets + 1;
        for (std::size_t b = 0; b < x.size(); b += per) {
            const std::size_t e = std::min(b + per, x.size());
            double mn = y[b], mx = y[b];
            for (std::size_t i = b; i < e; ++i) {
                mn = std::min(mn, y[i]);
                mx = std::max(mx, y[i]);
            }
            if (logx && x[b] <= 0) continue;
            const std::string xs = fmt_g(sx(x[b]));
            pts += xs + "," + fmt_g(sy(mx)) + " " + xs + "," + fmt_g(sy(mn)) + " ";
        }
    }

    std::string svg;
    svg.reserve(pts.size() + 4096);
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"540\" "
           "viewBox=\"0 0 960 540\" font-family=\"sans-serif\">\n";
    svg += "<rect width=\"960\" height=\"540\" fill=\"#ffffff\"/>\n";
    svg += "<text x=\"480\" y=\"28\" text-anchor=\"middle\" font-size=\"17\" "
           "fill=\"#202020\">" + title + "</text>\n";

    // Gridlines and tick labels.
    if (logx) {
        const int d0 = static_cast<int>(std::ceil(x0));
        const int d1 = static_cast<int>(std::floor(x1));
        for (int d = d0; d <= d1; ++d) {
            const double px = ml + (d - x0) / (x1 - x0) * pw;
            svg += "<line x1=\"" + fmt_g(px) + "\" y1=\"" + fmt_g(mt) + "\" x2=\"" +
                   fmt_g(px) + "\" y2=\"" + fmt_g(mt + ph) +
                   "\" stroke=\"#dddddd\"/>\n";
            svg += "<text x=\"" + fmt_g(px) + "\" y=\"" + fmt_g(H - mb + 20) +
                   "\" text-anchor=\"middle\" font-size=\"12\" fill=\"#404040\">1e" +
                   std::to_string(d) + "</text>\n";
        }
    } else {
        for (double v : nice_ticks(x0, x1, 7).values) {
            const double px = ml + (v - x0) / (x1 - x0) * pw;
            svg += "<line x1=\"" + fmt_g(px) + "\" y1=\"" + fmt_g(mt) + "\" x2=\"" +
                   fmt_g(px) + "\" y2=\"" + fmt_g(mt + ph) +
                   "\" stroke=\"#dddddd\"/>\n";
            svg += "<text x=\"" + fmt_g(px) + "\" y=\"" + fmt_g(H - mb + 20) +
                   "\" text-anchor=\"middle\" font-size=\"12\" fill=\"#404040\">" +
                   fmt_g(v) + "</text>\n";
        }
    }
    for (double v : nice_ticks(y0, y1, 6).values) {
        const double py = sy(v);
        svg += "<line x1=\"" + fmt_g(ml) + "\" y1=\"" + fmt_g(py) + "\" x2=\"" +
               fmt_g(ml + pw) + "\" y2=\"" + fmt_g(py) + "\" stroke=\"#dddddd\"/>\n";
        svg += "<text x=\"" + fmt_g(ml - 8) + "\" y=\"" + fmt_g(py + 4) +
               "\" text-anchor=\"end\" font-size=\"12\" fill=\"#404040\">" +
               fmt_g(v) + "</text>\n";
    }

    svg += "<rect x=\"" + fmt_g(ml) + "\" y=\"" + fmt_g(mt) + "\" width=\"" +
           fmt_g(pw) + "\" height=\"" + fmt_g(ph) +
           "\" fill=\"none\" stroke=\"#707070\"/>\n";
    svg += "<text x=\"" + fmt_g(ml + pw / 2) + "\" y=\"" + fmt_g(H - 12) +
           "\" text-anchor=\"middle\" font-size=\"13\" fill=\"#202020\">" +
           x_label + "</text>\n";
    svg += "<text x=\"18\" y=\"" + fmt_g(mt + ph / 2) +
           "\" text-anchor=\"middle\" font-size=\"13\" fill=\"#202020\" "
           "transform=\"rotate(-90 18 " + fmt_g(mt + ph / 2) + ")\">" +
           y_label + "</text>\n";
    svg += "<polyline points=\"" + pts +
           "\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1\"/>\n";
    svg += "</svg>\n";

    write_text_atomic(path, svg);
}

}  // namespace smpsim::io
