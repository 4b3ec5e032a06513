// driftlab command-line interface.

#include <driftlab/driftlab.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

namespace {

using namespace driftlab;
using nlohmann::ordered_json;

std::string error_kind(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e)) return "config_error";
    if (dynamic_cast<const ParseError*>(&e)) return "parse_error";
    if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
    if (dynamic_cast<const FitError*>(&e)) return "fit_error";
    if (dynamic_cast<const OrderingError*>(&e)) return "ordering_error";
    if (dynamic_cast<const NumericalError*>(&e)) return "numerical_error";
    if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
    return "error";
}

config::ExperimentConfig load(const std::optional<std::string>& path)
{
    return path ? config::parse_config(logs::read_file(*path)) : config::parse_config("");
}

int cmd_simulate(const std::string& cfg_path, const std::string& out_dir)
{
    const auto cfg = load(cfg_path);
    const auto t0 = std::chrono::steady_clock::now();
    const auto log = harness::run_closed_loop(cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    harness::write_bundle(out_dir, cfg, log);
    auto rep = harness::make_report(cfg, log);
    std::cout << rep.dump(2) << "\n";
    std::cerr << "simulated " << cfg.duration << " s in " << wall << " s, output in " << out_dir << "\n";
    return 0;
}

int cmd_replay(const std::string& meas_path, const std::optional<std::string>& cfg_path,
               const std::string& channel, const std::optional<std::string>& out)
{
    const auto cfg = load(cfg_path);
    const auto rows = logs::parse_measurements(logs::read_file(meas_path));
    const auto est = harness::replay(rows, cfg, harness::parse_channel(channel));
    const auto csv = logs::to_csv(est);
    if (out) {
        logs::write_file(*out, csv);
    } else {
        std::cout << csv;
    }
    return 0;
}

int cmd_fit(const std::string& pts_path, std::optional<double> lambda, bool kasa_only)
{
    const auto pts = logs::parse_points(logs::read_file(pts_path));
    ordered_json j;
    if (kasa_only) {
        const auto f = circlefit::kasa_fit(pts);
        j = {{"method", "kasa"}, {"x0", f.x0}, {"y0", f.y0}, {"r", f.r}, {"residual", f.residual}};
    } else {
        circlefit::ResilientOptions<double> opt;
        opt.lambda = lambda;
        const auto f = circlefit::resilient_fit(pts, opt);
        j = {{"method", "resilient"}, {"x0", f.x0}, {"y0", f.y0}, {"r", f.r},
             {"lambda", f.lambda}, {"iterations", f.iterations}, {"converged", f.converged},
             {"objective", f.residual}, {"a_t", f.a}};
        std::vector<std::size_t> outliers;
        for (std::size_t i = 0; i < f.a.size(); ++i) {
            if (f.a[i] != 0.0) outliers.push_back(i);
        }
        j["outliers"] = outliers;
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_metrics(const std::string& truth_path, const std::string& est_path,
                const std::optional<std::string>& cfg_path, double t_start, double t_end)
{
    const auto cfg = load(cfg_path);
    const auto truth = logs::parse_truth(logs::read_file(truth_path));
    const auto est = logs::parse_estimates(logs::read_file(est_path));
    const auto rep = metrics::compute_metrics(truth, est, cfg.task, {t_start, t_end});
    std::cout << metrics::to_json(rep).dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Drift control and state estimation simulator"};
    app.require_subcommand(1);

    std::string sim_cfg;
    std::string sim_out = "run";
    auto* sim = app.add_subcommand("simulate", "Run a closed-loop experiment and write its logs");
    sim->add_option("config", sim_cfg, "TOML experiment config")->required();
    sim->add_option("--out,-o", sim_out, "Output directory");

    std::string rep_meas;
    std::optional<std::string> rep_cfg;
    std::string rep_channel = "ekf";
    std::optional<std::string> rep_out;
    auto* rep = app.add_subcommand("replay", "Re-run an estimator over a measurement log");
    rep->add_option("measurements", rep_meas, "Measurement CSV")->required();
    rep->add_option("--config,-c", rep_cfg, "TOML experiment config");
    rep->add_option("--channel", rep_channel, "Sensor subset: zed, d435i or ekf");
    rep->add_option("--out,-o", rep_out, "Write the estimate CSV here instead of stdout");

    std::string fit_pts;
    std::optional<double> fit_lambda;
    bool fit_kasa = false;
    auto* fit = app.add_subcommand("fit-circle", "Fit a circle to x,y points");
    fit->add_option("points", fit_pts, "CSV of x,y points")->required();
    fit->add_option("--lambda", fit_lambda, "l1 weight of the resilient fit (default: automatic)");
    fit->add_flag("--kasa", fit_kasa, "Plain algebraic fit without outlier offsets");

    std::string met_truth;
    std::string met_est;
    std::optional<std::string> met_cfg;
    double met_t0 = -std::numeric_limits<double>::infinity();
    double met_t1 = std::numeric_limits<double>::infinity();
    auto* met = app.add_subcommand("metrics", "Error statistics of an estimate log against a truth log");
    met->add_option("truth", met_truth, "Truth CSV")->required();
    met->add_option("estimates", met_est, "Estimate CSV")->required();
    met->add_option("--config,-c", met_cfg, "TOML config providing the task");
    met->add_option("--t-start", met_t0, "Ignore rows before this time (s)");
    met->add_option("--t-end", met_t1, "Ignore rows after this time (s)");

    bool cfg_defaults = false;
    auto* cfgc = app.add_subcommand("config", "Print configuration");
    cfgc->add_flag("--defaults", cfg_defaults, "Print the built-in defaults as TOML")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sim) return cmd_simulate(sim_cfg, sim_out);
        if (*rep) return cmd_replay(rep_meas, rep_cfg, rep_channel, rep_out);
        if (*fit) return cmd_fit(fit_pts, fit_lambda, fit_kasa);
        if (*met) return cmd_metrics(met_truth, met_est, met_cfg, met_t0, met_t1);
        if (*cfgc) {
            std::cout << config::dump_config(config::default_config());
            return 0;
        }
    } catch (const std::exception& e) {
        const ordered_json err{{"error", error_kind(e)}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 1;
}
