#pragma once

#include <map>
#include <string>
#include <vector>

#include "redprobe/probe.hpp"

namespace redprobe {

// One line of results.csv. Header is exactly
// "experiment,task,layer,subset,rank,valid_score,test_score,metric".
struct ResultRow {
    std::string experiment;
    std::string task;
    int layer = 0;
    std::string subset;  // dash-joined dim ids or "ALL"
    int rank = 0;        // 0 = baseline
    Score valid_score;
    Score test_score;
    std::string metric;
};

// 4 decimal places, or the literal "NaN" for undefined scores.
std::string format_score(const Score& s);

std::string results_csv_header();
std::string results_csv(const std::vector<ResultRow>& rows);
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);

// Baseline row (rank 0, subset "ALL") followed by ranked entries.
std::vector<ResultRow> rows_from_report(const ProbeReport& report);

// Two overlaid bar series over score bins, axis labels included.
void write_histogram_svg(const std::string& path, const Histogram& a, const Histogram& b,
                         const std::string& label_a, const std::string& label_b,
                         const std::string& x_label);

// Plain-text "key = value" configuration. '#' starts a comment, keys may
// appear once, and unknown keys are rejected at validation time.
class RunConfig {
public:
    static RunConfig parse_string(const std::string& text);
    static RunConfig parse_file(const std::string& path);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Throws ConfigError naming the first key outside `known`.
    void validate_keys(const std::vector<std::string>& known) const;

    // Deterministic "key = value" lines, sorted by key.
    std::string serialize() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace redprobe
