#include "lblm/cli/pipeline.hpp"
#include "lblm/io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace lblm::cli {

namespace {

struct Series {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> pts;
    bool dashed = false;
};

struct Figure {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<Series> series;
    std::vector<std::pair<double, std::string>> vmarkers;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw FormatError("CSV has no column '" + name + "'", 0);
        return static_cast<int>(it - header.begin());
    }
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

Table parse_csv(const std::string& text) {
    Table t;
    std::istringstream is(strip_comments(text));
    std::string line;
    std::uint64_t offset = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (t.header.empty()) {
            t.header = cells;
        } else {
            if (cells.size() != t.header.size()) throw FormatError("ragged CSV row", offset);
            t.rows.push_back(std::move(cells));
        }
        offset += line.size() + 1;
    }
    if (t.header.empty()) throw FormatError("empty CSV", 0);
    return t;
}

double num(const std::string& s) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw FormatError("not a number: '" + s + "'", 0);
        return v;
    } catch (const std::logic_error&) {
        throw FormatError("not a number: '" + s + "'", 0);
    }
}

std::string f2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

std::string tick(double v) {
    std::ostringstream os;
    os << std::setprecision(3) << v;
    return os.str();
}

std::string render(const Figure& fig) {
    const double W = 720, H = 420, L = 70, R = 160, T = 40, B = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : fig.series) {
        for (auto [x, y] : s.pts) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    if (!std::isfinite(x0)) throw FormatError("nothing to plot", 0);
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << fig.title << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
        os << "<text x=\"" << f2(px(xv)) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << tick(xv)
           << "</text>\n";
        os << "<text x=\"" << L - 6 << "\" y=\"" << f2(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
           << "</text>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << fig.xlabel
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (T + H - B) / 2 << ")\">" << fig.ylabel << "</text>\n";
    for (const auto& [x, label] : fig.vmarkers) {
        os << "<line x1=\"" << f2(px(x)) << "\" y1=\"" << T << "\" x2=\"" << f2(px(x)) << "\" y2=\"" << H - B
           << "\" stroke=\"#888\" stroke-dasharray=\"5,4\"/>\n";
        os << "<text x=\"" << f2(px(x) + 4) << "\" y=\"" << T + 14 << "\" fill=\"#555\">" << label << "</text>\n";
    }
    int li = 0;
    for (const auto& s : fig.series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
           << (s.dashed ? " stroke-dasharray=\"6,3\"" : "") << " points=\"";
        for (auto [x, y] : s.pts) os << f2(px(x)) << ',' << f2(py(y)) << ' ';
        os << "\"/>\n";
        double ly = T + 12 + 18 * li++;
        os << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 36 << "\" y2=\"" << ly
           << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << W - R + 42 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

Figure overlay_figure(const Table& t, int channel) {
    int ct = t.col("t"), cc = t.col("channel"), ctr = t.col("truth"), cp = t.col("prediction"),
        cf = t.col("is_forecast");
    Figure fig{"Forecast overlay, channel " + std::to_string(channel), "sample", "amplitude (normalized)", {}, {}};
    Series truth{"truth", "#1f77b4", {}, false}, pred{"prediction", "#d62728", {}, true};
    double start = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : t.rows) {
        if (static_cast<int>(num(r[cc])) != channel) continue;
        double x = num(r[ct]);
        truth.pts.emplace_back(x, num(r[ctr]));
        if (r[cf] == "1") {
            if (std::isnan(start)) start = x;
            pred.pts.emplace_back(x, num(r[cp]));
        }
    }
    if (truth.pts.empty()) throw ConfigError("overlay has no rows for channel " + std::to_string(channel));
    fig.series = {truth, pred};
    if (!std::isnan(start)) fig.vmarkers.emplace_back(start, "prediction start");
    return fig;
}

Figure pretrain_log_figure(const Table& t) {
    int cs = t.col("stage"), cl = t.col("loss_total");
    Figure fig{"Pretraining loss", "epoch (cumulative)", "loss", {}, {}};
    std::map<std::string, Series> by_stage;
    std::vector<std::string> order;
    int x = 0;
    for (const auto& r : t.rows) {
        if (!by_stage.count(r[cs])) {
            order.push_back(r[cs]);
            by_stage[r[cs]] = Series{r[cs], order.size() == 1 ? "#1f77b4" : "#ff7f0e", {}, false};
            if (x > 0) fig.vmarkers.emplace_back(x + 0.5, r[cs]);
        }
        by_stage[r[cs]].pts.emplace_back(++x, num(r[cl]));
    }
    for (const auto& s : order) fig.series.push_back(by_stage[s]);
    return fig;
}

Figure finetune_log_figure(const Table& t) {
    int ce = t.col("epoch"), cl = t.col("train_loss");
    Figure fig{"Finetuning loss", "epoch", "train loss", {}, {}};
    Series s{"train loss", "#1f77b4", {}, false};
    for (const auto& r : t.rows) s.pts.emplace_back(num(r[ce]), num(r[cl]));
    fig.series = {s};
    return fig;
}

Figure summary_figure(const Table& t) {
    int ch = t.col("horizon"), cm = t.col("mse"), cb = t.col("baseline_mse");
    Figure fig{"Forecast MSE by horizon", "horizon (samples)", "MSE (normalized)", {}, {}};
    Series model{"model", "#d62728", {}, false}, base{"persistence", "#7f7f7f", {}, true};
    for (const auto& r : t.rows) {
        model.pts.emplace_back(num(r[ch]), num(r[cm]));
        base.pts.emplace_back(num(r[ch]), num(r[cb]));
    }
    fig.series = {model, base};
    return fig;
}

bool has(const Table& t, const std::string& c) {
    return std::find(t.header.begin(), t.header.end(), c) != t.header.end();
}

}  // namespace

void run_plot(const std::filesystem::path& in, const std::filesystem::path& out, int channel) {
    auto bytes = io::read_file(in);
    auto t = parse_csv(std::string(bytes.begin(), bytes.end()));
    Figure fig;
    if (has(t, "is_forecast")) {
        fig = overlay_figure(t, channel);
    } else if (has(t, "loss_total")) {
        fig = pretrain_log_figure(t);
    } else if (has(t, "train_loss")) {
        fig = finetune_log_figure(t);
    } else if (has(t, "baseline_mse") && !has(t, "segment")) {
        fig = summary_figure(t);
    } else {
        throw FormatError("unrecognized CSV for plotting (expected overlay, training log or forecast summary)", 0);
    }
    std::string svg = render(fig);
    // Carry the producing run's config hash into the figure.
    std::string text(bytes.begin(), bytes.end());
    const std::string key = "# config_hash=";
    if (text.rfind(key, 0) == 0) {
        auto hash = text.substr(key.size(), text.find('\n') - key.size());
        svg.insert(svg.find('>') + 2, "<!-- config_hash=" + hash + " -->\n");
    }
    io::write_text_atomic(out, svg);
}

}  // namespace lblm::cli
