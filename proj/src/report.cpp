#include "trove/report.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <vector>

namespace trove {

using nlohmann::json;

namespace {

constexpr const char* kMetricNames[] = {
    "macro_track_p",    "macro_track_r",    "macro_track_f1", "micro_track_p",
    "micro_track_r",    "micro_track_f1",   "macro_relation_p", "macro_relation_r",
    "macro_relation_f1", "micro_relation_p", "micro_relation_r", "micro_relation_f1",
    "overall_f1",
};

std::vector<double> metric_row(const MetricValues& v) {
    return {v.macro_track_p,    v.macro_track_r,    v.macro_track_f1, v.micro_track_p,
            v.micro_track_r,    v.micro_track_f1,   v.macro_relation_p, v.macro_relation_r,
            v.macro_relation_f1, v.micro_relation_p, v.micro_relation_r, v.micro_relation_f1,
            v.overall_f1};
}

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// breakdown axes in a fixed report order
constexpr const char* kAxes[] = {"scenario", "language", "length_bucket", "doc_class"};

template <typename Fn>
void for_each_cell(const MetricReport& report, Fn&& fn) {
    fn("overall", report.overall);
    for (const char* axis : kAxes) {
        auto it = report.breakdowns.find(axis);
        if (it == report.breakdowns.end()) continue;
        for (const auto& [cell, values] : it->second) {
            fn(std::string(axis) + "=" + cell, values);
        }
    }
}

json values_to_json(const MetricValues& v) {
    json j;
    auto row = metric_row(v);
    for (std::size_t i = 0; i < row.size(); ++i) j[kMetricNames[i]] = row[i];
    j["n_examples"] = v.n_examples;
    return j;
}

MetricValues values_from_json(const json& j) {
    MetricValues v;
    v.macro_track_p = j.at("macro_track_p").get<double>();
    v.macro_track_r = j.at("macro_track_r").get<double>();
    v.macro_track_f1 = j.at("macro_track_f1").get<double>();
    v.micro_track_p = j.at("micro_track_p").get<double>();
    v.micro_track_r = j.at("micro_track_r").get<double>();
    v.micro_track_f1 = j.at("micro_track_f1").get<double>();
    v.macro_relation_p = j.at("macro_relation_p").get<double>();
    v.macro_relation_r = j.at("macro_relation_r").get<double>();
    v.macro_relation_f1 = j.at("macro_relation_f1").get<double>();
    v.micro_relation_p = j.at("micro_relation_p").get<double>();
    v.micro_relation_r = j.at("micro_relation_r").get<double>();
    v.micro_relation_f1 = j.at("micro_relation_f1").get<double>();
    v.overall_f1 = j.at("overall_f1").get<double>();
    v.n_examples = j.at("n_examples").get<std::size_t>();
    return v;
}

}  // namespace

std::string report_to_csv(const MetricReport& report) {
    std::ostringstream out;
    out << "cell";
    for (const char* name : kMetricNames) out << ',' << name;
    out << '\n';
    for_each_cell(report, [&](const std::string& cell, const MetricValues& v) {
        out << cell;
        for (double value : metric_row(v)) out << ',' << format_metric(value);
        out << '\n';
    });
    return out.str();
}

std::string report_to_text(const MetricReport& report) {
    std::ostringstream out;
    out << "aggregation: " << report.aggregation << "\n\n";
    std::size_t cell_width = 8;
    for_each_cell(report, [&](const std::string& cell, const MetricValues&) {
        cell_width = std::max(cell_width, cell.size());
    });
    out << std::left << std::setw(static_cast<int>(cell_width) + 2) << "cell" << std::right;
    for (const char* name : kMetricNames) out << std::setw(19) << name;
    out << std::setw(8) << "n" << '\n';
    for_each_cell(report, [&](const std::string& cell, const MetricValues& v) {
        out << std::left << std::setw(static_cast<int>(cell_width) + 2) << cell << std::right;
        for (double value : metric_row(v)) out << std::setw(19) << format_metric(value);
        out << std::setw(8) << v.n_examples << '\n';
    });
    return out.str();
}

json report_to_json(const MetricReport& report) {
    json j;
    j["aggregation"] = report.aggregation;
    j["overall"] = values_to_json(report.overall);
    json breakdowns = json::object();
    for (const auto& [axis, cells] : report.breakdowns) {
        json group = json::object();
        for (const auto& [cell, values] : cells) group[cell] = values_to_json(values);
        breakdowns[axis] = std::move(group);
    }
    j["breakdowns"] = std::move(breakdowns);
    return j;
}

MetricReport report_from_json(const json& j) {
    MetricReport report;
    report.aggregation = j.at("aggregation").get<std::string>();
    report.overall = values_from_json(j.at("overall"));
    for (const auto& [axis, cells] : j.at("breakdowns").items()) {
        for (const auto& [cell, values] : cells.items()) {
            report.breakdowns[axis][cell] = values_from_json(values);
        }
    }
    return report;
}

}  // namespace trove
