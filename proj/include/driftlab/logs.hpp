#pragma once

// CSV logs written by the harness and read back by the CLI. Doubles are
// written with 17 significant digits so a read-back reproduces them exactly.

#include <driftlab/circlefit.hpp>
#include <driftlab/errors.hpp>
#include <driftlab/estimator.hpp>
#include <driftlab/plant.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace driftlab::logs {

using plant::TrajectoryRow;

struct EstimateRow {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    double v = 0.0;
    double beta = 0.0;
};

/// Raw sensor report as logged: positions in the sensor's output frame
/// (ZED frame for zed_pos, ground for d435i_pos), (theta, psi) for imu_theta.
struct MeasurementRow {
    double t = 0.0;
    estimator::Sensor sensor = estimator::Sensor::zed_pos;
    double v1 = 0.0;
    double v2 = 0.0;
};

struct CommandRow {
    double t = 0.0;
    double delta = 0.0;
    double omega = 0.0;
    double phi = 0.0;
    double r_ref = 0.0;
    double r_fit = 0.0;
    double beta_hat = 0.0;
};

inline constexpr std::string_view truth_header = "t,x,y,psi,v,beta,delta,omega";
inline constexpr std::string_view estimate_header = "t,x,y,theta,v,beta";
inline constexpr std::string_view measurement_header = "t,sensor,v1,v2";
inline constexpr std::string_view command_header = "t,delta,omega,phi,r_ref,r_fit,beta_hat";

namespace detail {

inline void put(std::string& out, double v)
{
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(n));
}

template <class... D>
void put_row(std::string& out, double first, D... rest)
{
    put(out, first);
    ((out.push_back(','), put(out, rest)), ...);
    out.push_back('\n');
}

inline std::vector<std::string_view> split(std::string_view line)
{
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
        f.push_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return f;
}

inline bool parse_double(std::string_view s, double& out)
{
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

inline double number(std::string_view s, std::size_t line_no)
{
    double v = 0.0;
    if (!parse_double(s, v)) {
        throw ParseError("line " + std::to_string(line_no) + ": not a number: '" + std::string(s) + "'");
    }
    return v;
}

/// Calls fn(fields, line_no) for each data line; skips blank lines, '#'
/// comments and a leading non-numeric header line.
template <class Fn>
void for_each_record(std::string_view text, std::size_t min_fields, Fn&& fn)
{
    std::size_t line_no = 0;
    bool first = true;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto f = split(line);
        if (first) {
            first = false;
            double probe = 0.0;
            if (!parse_double(f[0], probe)) continue; // header
        }
        if (f.size() < min_fields) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(min_fields)
                             + " fields, got " + std::to_string(f.size()));
        }
        fn(f, line_no);
    }
}

} // namespace detail

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open '" + path + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ParseError("cannot write '" + path + "'");
    }
    out << content;
}

inline std::string to_csv(const std::vector<TrajectoryRow>& rows)
{
    std::string s(truth_header);
    s.push_back('\n');
    for (const auto& r : rows) detail::put_row(s, r.t, r.x, r.y, r.psi, r.v, r.beta, r.delta, r.omega);
    return s;
}

inline std::string to_csv(const std::vector<EstimateRow>& rows)
{
    std::string s(estimate_header);
    s.push_back('\n');
    for (const auto& r : rows) detail::put_row(s, r.t, r.x, r.y, r.theta, r.v, r.beta);
    return s;
}

inline std::string to_csv(const std::vector<CommandRow>& rows)
{
    std::string s(command_header);
    s.push_back('\n');
    for (const auto& r : rows) detail::put_row(s, r.t, r.delta, r.omega, r.phi, r.r_ref, r.r_fit, r.beta_hat);
    return s;
}

inline std::string to_csv(const std::vector<MeasurementRow>& rows)
{
    std::string s(measurement_header);
    s.push_back('\n');
    for (const auto& r : rows) {
        detail::put(s, r.t);
        s.push_back(',');
        s.append(estimator::to_string(r.sensor));
        s.push_back(',');
        detail::put(s, r.v1);
        s.push_back(',');
        detail::put(s, r.v2);
        s.push_back('\n');
    }
    return s;
}

inline std::vector<TrajectoryRow> parse_truth(std::string_view text)
{
    std::vector<TrajectoryRow> rows;
    detail::for_each_record(text, 6, [&](const auto& f, std::size_t n) {
        TrajectoryRow r;
        r.t = detail::number(f[0], n);
        r.x = detail::number(f[1], n);
        r.y = detail::number(f[2], n);
        r.psi = detail::number(f[3], n);
        r.v = detail::number(f[4], n);
        r.beta = detail::number(f[5], n);
        if (f.size() >= 8) {
            r.delta = detail::number(f[6], n);
            r.omega = detail::number(f[7], n);
        }
        rows.push_back(r);
    });
    return rows;
}

inline std::vector<EstimateRow> parse_estimates(std::string_view text)
{
    std::vector<EstimateRow> rows;
    detail::for_each_record(text, 6, [&](const auto& f, std::size_t n) {
        rows.push_back({detail::number(f[0], n), detail::number(f[1], n), detail::number(f[2], n),
                        detail::number(f[3], n), detail::number(f[4], n), detail::number(f[5], n)});
    });
    return rows;
}

inline std::vector<MeasurementRow> parse_measurements(std::string_view text)
{
    std::vector<MeasurementRow> rows;
    detail::for_each_record(text, 3, [&](const auto& f, std::size_t n) {
        MeasurementRow r;
        r.t = detail::number(f[0], n);
        try {
            r.sensor = estimator::parse_sensor(f[1]);
        } catch (const DomainError& e) {
            throw ParseError("line " + std::to_string(n) + ": " + e.what());
        }
        r.v1 = detail::number(f[2], n);
        r.v2 = f.size() >= 4 && !f[3].empty() ? detail::number(f[3], n) : 0.0;
        rows.push_back(r);
    });
    return rows;
}

inline std::vector<circlefit::Point<double>> parse_points(std::string_view text)
{
    std::vector<circlefit::Point<double>> pts;
    detail::for_each_record(text, 2, [&](const auto& f, std::size_t n) {
        pts.push_back({detail::number(f[0], n), detail::number(f[1], n)});
    });
    return pts;
}

} // namespace driftlab::logs
