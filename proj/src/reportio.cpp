#include "redprobe/reportio.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "redprobe/errors.hpp"

namespace redprobe {

std::string format_score(const Score& s) {
    if (!s.has_value()) {
        return "NaN";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *s);
    return buf;
}

std::string results_csv_header() {
    return "experiment,task,layer,subset,rank,valid_score,test_score,metric";
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::string out = results_csv_header() + "\n";
    for (const auto& r : rows) {
        out += r.experiment + ',' + r.task + ',' + std::to_string(r.layer) + ',' + r.subset + ',' +
               std::to_string(r.rank) + ',' + format_score(r.valid_score) + ',' +
               format_score(r.test_score) + ',' + r.metric + '\n';
    }
    return out;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("write_results_csv: cannot open " + path);
    }
    const std::string text = results_csv(rows);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("write_results_csv: write to " + path + " failed");
    }
}

std::vector<ResultRow> rows_from_report(const ProbeReport& report) {
    std::vector<ResultRow> rows;
    rows.reserve(report.entries.size() + 1);
    ResultRow baseline;
    baseline.experiment = report.experiment;
    baseline.task = report.task;
    baseline.layer = report.baseline_layer;
    baseline.subset = "ALL";
    baseline.rank = 0;
    baseline.valid_score = report.baseline_valid;
    baseline.test_score = report.baseline_test;
    baseline.metric = metric_name(report.metric);
    rows.push_back(std::move(baseline));
    int rank = 1;
    for (const auto& e : report.entries) {
        ResultRow row;
        row.experiment = report.experiment;
        row.task = report.task;
        row.layer = e.layer;
        row.subset = e.subset.to_string();
        row.rank = rank++;
        row.valid_score = e.valid;
        row.test_score = e.test;
        row.metric = metric_name(report.metric);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_histogram_svg(const std::string& path, const Histogram& a, const Histogram& b,
                         const std::string& label_a, const std::string& label_b,
                         const std::string& x_label) {
    if (a.min_bin != b.min_bin || a.counts.size() != b.counts.size()) {
        throw DimensionError("histogram_svg: series have different bin layouts");
    }
    // Trim to the occupied bin range so small spreads stay readable.
    int lo = static_cast<int>(a.counts.size()), hi = -1;
    for (size_t i = 0; i < a.counts.size(); ++i) {
        if (a.counts[i] > 0 || b.counts[i] > 0) {
            lo = std::min(lo, static_cast<int>(i));
            hi = std::max(hi, static_cast<int>(i));
        }
    }
    if (hi < 0) {
        lo = 0;
        hi = static_cast<int>(a.counts.size()) - 1;
    }
    const int n_bins = hi - lo + 1;
    uint64_t max_count = 1;
    for (int i = lo; i <= hi; ++i) {
        max_count = std::max({max_count, a.counts[i], b.counts[i]});
    }

    const double width = 720.0, height = 420.0;
    const double ml = 60.0, mr = 20.0, mt = 40.0, mb = 60.0;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    const double bar_w = plot_w / n_bins;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    auto draw_series = [&](const Histogram& h, const char* color, double shift) {
        for (int i = lo; i <= hi; ++i) {
            if (h.counts[i] == 0) {
                continue;
            }
            const double bh = plot_h * static_cast<double>(h.counts[i]) / static_cast<double>(max_count);
            const double x = ml + (i - lo) * bar_w + shift;
            const double y = mt + plot_h - bh;
            svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w * 0.45
                << "\" height=\"" << bh << "\" fill=\"" << color << "\" fill-opacity=\"0.8\"/>\n";
        }
    };
    draw_series(a, "#4477aa", bar_w * 0.02);
    draw_series(b, "#ee6677", bar_w * 0.5);

    // Axes
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w << "\" y2=\""
        << mt + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + plot_h
        << "\" stroke=\"black\"/>\n";

    // X ticks every ~8 bins, labelled with the bin's lower score bound.
    const int tick_step = std::max(1, n_bins / 8);
    for (int i = lo; i <= hi; i += tick_step) {
        const double x = ml + (i - lo) * bar_w;
        char lab[16];
        std::snprintf(lab, sizeof(lab), "%.2f", (a.min_bin + i) / 100.0);
        svg << "<line x1=\"" << x << "\" y1=\"" << mt + plot_h << "\" x2=\"" << x << "\" y2=\""
            << mt + plot_h + 5 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << x << "\" y=\"" << mt + plot_h + 20
            << "\" font-size=\"11\" text-anchor=\"middle\">" << lab << "</text>\n";
    }
    svg << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 15
        << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label << "</text>\n";

    // Y ticks at 0, mid, max.
    for (uint64_t v : {uint64_t{0}, max_count / 2, max_count}) {
        const double y = mt + plot_h - plot_h * static_cast<double>(v) / static_cast<double>(max_count);
        svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << ml - 10 << "\" y=\"" << y + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << v << "</text>\n";
    }
    svg << "<text x=\"15\" y=\"" << mt + plot_h / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << mt + plot_h / 2
        << ")\">subset count</text>\n";

    // Legend
    svg << "<rect x=\"" << ml + 10 << "\" y=\"" << mt - 25 << "\" width=\"12\" height=\"12\" fill=\""
        << "#4477aa" << "\"/>\n";
    svg << "<text x=\"" << ml + 27 << "\" y=\"" << mt - 15 << "\" font-size=\"12\">" << label_a
        << "</text>\n";
    svg << "<rect x=\"" << ml + 160 << "\" y=\"" << mt - 25 << "\" width=\"12\" height=\"12\" fill=\""
        << "#ee6677" << "\"/>\n";
    svg << "<text x=\"" << ml + 177 << "\" y=\"" << mt - 15 << "\" font-size=\"12\">" << label_b
        << "</text>\n";
    svg << "</svg>\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("write_histogram_svg: cannot open " + path);
    }
    const std::string text = svg.str();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("write_histogram_svg: write to " + path + " failed");
    }
}

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return s.substr(b, e - b);
}

}  // namespace

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        if (cfg.values_.count(key)) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

bool RunConfig::has(const std::string& key) const {
    return values_.count(key) != 0;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError("config: missing required key '" + key + "'");
    }
    return it->second;
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) {
            throw std::invalid_argument("");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: " + it->second);
    }
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    try {
        size_t pos = 0;
        const uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) {
            throw std::invalid_argument("");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an unsigned integer: " + it->second);
    }
}

double RunConfig::get_real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) {
            throw std::invalid_argument("");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (it->second == "true" || it->second == "1") {
        return true;
    }
    if (it->second == "false" || it->second == "0") {
        return false;
    }
    throw ConfigError("config: key '" + key + "' is not a boolean: " + it->second);
}

void RunConfig::validate_keys(const std::vector<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key + " = " + value + "\n";
    }
    return out;
}

}  // namespace redprobe
