#include "kaneq/metrics.hpp"

#include "kaneq/csv.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace kaneq::metrics {

namespace {

constexpr double kZeroFloor = 1e-300;

bool is_zero(double v) { return std::abs(v) < kZeroFloor; }

void require_same(const Matrix& y, const Matrix& yhat) {
    if (y.rows != yhat.rows || y.cols != yhat.cols)
        throw dimension_error("metrics: shape mismatch (" + std::to_string(y.rows) + "," +
                              std::to_string(y.cols) + ") vs (" + std::to_string(yhat.rows) + "," +
                              std::to_string(yhat.cols) + ")");
    if (y.rows == 0 || y.cols == 0) throw contract_error("metrics: empty input");
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

double relative_element_error(double y, double yhat) {
    if (is_zero(y)) return is_zero(yhat) ? 0.0 : 1.0;
    return (y - yhat) / y;
}

std::vector<double> rmse(const Matrix& y, const Matrix& yhat) {
    require_same(y, yhat);
    std::vector<double> out(static_cast<std::size_t>(y.cols), 0.0);
    for (int c = 0; c < y.cols; ++c) {
        double acc = 0.0;
        for (int r = 0; r < y.rows; ++r) {
            const double d = y.at(r, c) - yhat.at(r, c);
            acc += d * d;
        }
        out[static_cast<std::size_t>(c)] = std::sqrt(acc / y.rows);
    }
    return out;
}

std::vector<double> rrmse(const Matrix& y, const Matrix& yhat) {
    require_same(y, yhat);
    std::vector<double> out(static_cast<std::size_t>(y.cols), 0.0);
    for (int c = 0; c < y.cols; ++c) {
        double acc = 0.0;
        for (int r = 0; r < y.rows; ++r) {
            const double e = relative_element_error(y.at(r, c), yhat.at(r, c));
            acc += e * e;
        }
        out[static_cast<std::size_t>(c)] = std::sqrt(acc / y.rows);
    }
    return out;
}

std::vector<ErrorDistribution> relative_error_distribution(const Matrix& y, const Matrix& yhat,
                                                           double threshold) {
    require_same(y, yhat);
    std::vector<ErrorDistribution> out(static_cast<std::size_t>(y.cols));
    std::vector<double> abs_err(static_cast<std::size_t>(y.rows));
    for (int c = 0; c < y.cols; ++c) {
        long exceed = 0;
        for (int r = 0; r < y.rows; ++r) {
            const double e = std::abs(relative_element_error(y.at(r, c), yhat.at(r, c)));
            abs_err[static_cast<std::size_t>(r)] = e;
            if (e > threshold) ++exceed;
        }
        std::sort(abs_err.begin(), abs_err.end());
        ErrorDistribution& d = out[static_cast<std::size_t>(c)];
        d.min = abs_err.front();
        d.q1 = quantile_sorted(abs_err, 0.25);
        d.median = quantile_sorted(abs_err, 0.50);
        d.q3 = quantile_sorted(abs_err, 0.75);
        d.max = abs_err.back();
        d.exceed_count = exceed;
        d.n = y.rows;
    }
    return out;
}

ErrorReport evaluate(const Matrix& y, const Matrix& yhat, const std::vector<std::string>& names,
                     double threshold) {
    require_same(y, yhat);
    if (static_cast<int>(names.size()) != y.cols)
        throw dimension_error("evaluate: " + std::to_string(names.size()) + " names for " +
                              std::to_string(y.cols) + " outputs");
    ErrorReport rep;
    rep.rows = y.rows;
    rep.threshold = threshold;
    const auto rm = rmse(y, yhat);
    const auto rr = rrmse(y, yhat);
    const auto dist = relative_error_distribution(y, yhat, threshold);
    for (int c = 0; c < y.cols; ++c) {
        OutputStats s;
        s.name = names[static_cast<std::size_t>(c)];
        s.rmse = rm[static_cast<std::size_t>(c)];
        s.rrmse = rr[static_cast<std::size_t>(c)];
        s.dist = dist[static_cast<std::size_t>(c)];
        rep.total_exceed += s.dist.exceed_count;
        rep.outputs.push_back(std::move(s));
    }
    rep.total_elements = static_cast<long>(y.rows) * y.cols;
    return rep;
}

std::vector<double> improvement_percent(const std::vector<double>& a,
                                        const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw dimension_error("improvement_percent: size mismatch or empty");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0)
            out[i] = b[i] == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
        else
            out[i] = 100.0 * (a[i] - b[i]) / a[i];
    }
    return out;
}

double mean_improvement_percent(const std::vector<double>& a, const std::vector<double>& b) {
    const auto imp = improvement_percent(a, b);
    double acc = 0.0;
    for (double v : imp) acc += v;
    return acc / static_cast<double>(imp.size());
}

void write_report_csv(const ErrorReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write report: " + path);
    out << "output,rmse,rrmse,err_min,err_q1,err_median,err_q3,err_max,exceed_count,n\n";
    for (const auto& s : report.outputs) {
        out << s.name << ',' << csv::format_double(s.rmse) << ',' << csv::format_double(s.rrmse)
            << ',' << csv::format_double(s.dist.min) << ',' << csv::format_double(s.dist.q1) << ','
            << csv::format_double(s.dist.median) << ',' << csv::format_double(s.dist.q3) << ','
            << csv::format_double(s.dist.max) << ',' << s.dist.exceed_count << ',' << s.dist.n
            << '\n';
    }
}

void write_report_json(const ErrorReport& report, const std::string& path) {
    nlohmann::json j;
    j["rows"] = report.rows;
    j["threshold"] = report.threshold;
    j["total_exceed"] = report.total_exceed;
    j["total_elements"] = report.total_elements;
    auto arr = nlohmann::json::array();
    for (const auto& s : report.outputs) {
        arr.push_back({{"output", s.name},
                       {"rmse", s.rmse},
                       {"rrmse", s.rrmse},
                       {"err_min", s.dist.min},
                       {"err_q1", s.dist.q1},
                       {"err_median", s.dist.median},
                       {"err_q3", s.dist.q3},
                       {"err_max", s.dist.max},
                       {"exceed_count", s.dist.exceed_count}});
    }
    j["outputs"] = arr;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write report: " + path);
    out << j.dump(1, '\t') << "\n";
}

} // namespace kaneq::metrics
