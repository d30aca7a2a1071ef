#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "funie/metrics.hpp"

namespace funie::metrics {

namespace {

std::optional<double> field(const MetricRow& r, const std::string& name) {
    if (name == "psnr_db") return r.psnr_db;
    if (name == "ssim") return r.ssim;
    if (name == "uiqm") return r.uiqm;
    if (name == "uicm") return r.uicm;
    if (name == "uism") return r.uism;
    return r.uiconm;
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("cannot write " + path);
}

}  // namespace

std::string MetricSummary::formatted(int precision) const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.*f ± %.*f", precision, mean, precision, std);
    return buf;
}

MetricRow evaluate_image(const std::string& name, const ImageU8& img, const ImageU8* reference) {
    MetricRow row;
    row.name = name;
    if (reference) {
        row.psnr_db = psnr(img, *reference);
        row.ssim = ssim(img, *reference);
    }
    const auto q = uiqm(img);
    row.uiqm = q.uiqm;
    row.uicm = q.uicm;
    row.uism = q.uism;
    row.uiconm = q.uiconm;
    return row;
}

MetricSummary summarize(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("cannot summarize an empty metric column");
    std::sort(values.begin(), values.end());
    MetricSummary s;
    s.count = values.size();
    long double sum = 0;
    for (double v : values) sum += v;
    s.mean = static_cast<double>(sum / static_cast<long double>(values.size()));
    long double sq = 0;
    for (double v : values) sq += (static_cast<long double>(v) - s.mean) * (static_cast<long double>(v) - s.mean);
    s.std = static_cast<double>(std::sqrt(sq / static_cast<long double>(values.size())));
    return s;
}

MetricReport aggregate(std::vector<MetricRow> rows) {
    if (rows.empty()) throw InvalidArgument("aggregate needs at least one row");
    MetricReport report;
    for (const auto& name : kMetricNames) {
        std::vector<double> values;
        for (const auto& r : rows)
            if (auto v = field(r, name)) values.push_back(*v);
        if (!values.empty()) report.aggregate[name] = summarize(std::move(values));
    }
    report.per_image = std::move(rows);
    return report;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : per_image) {
        nlohmann::json row = {{"name", r.name}};
        for (const auto& name : kMetricNames) row[name] = field(r, name) ? nlohmann::json(*field(r, name)) : nullptr;
        rows.push_back(std::move(row));
    }
    nlohmann::json agg = nlohmann::json::object();
    for (const auto& [name, s] : aggregate)
        agg[name] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}, {"formatted", s.formatted()}};
    return {{"per_image", rows}, {"aggregate", agg}};
}

std::string MetricReport::to_csv() const {
    std::ostringstream out;
    out << "name";
    for (const auto& name : kMetricNames) out << ',' << name;
    out << '\n';
    for (const auto& r : per_image) {
        out << r.name;
        for (const auto& name : kMetricNames) {
            out << ',';
            if (auto v = field(r, name)) out << fixed6(*v);
        }
        out << '\n';
    }
    return out.str();
}

void write_report(const MetricReport& report, const std::string& json_path, const std::string& csv_path) {
    if (!json_path.empty()) write_text(json_path, report.to_json().dump(2) + "\n");
    if (!csv_path.empty()) write_text(csv_path, report.to_csv());
}

}  // namespace funie::metrics
