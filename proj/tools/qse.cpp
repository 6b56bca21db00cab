// qse: quasi-score estimation of time-varying epidemic transmission.
//
// Subcommands: simulate | fit | bootstrap | forecast | bench | validate.
// Exit codes: 0 ok, 1 usage error, 2 data/format error, 3 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qse/bench.hpp"
#include "qse/core.hpp"
#include "qse/errors.hpp"
#include "qse/estimate.hpp"
#include "qse/forecast.hpp"
#include "qse/io.hpp"
#include "qse/parallel.hpp"
#include "qse/simulate.hpp"
#include "qse/uncertainty.hpp"

using nlohmann::json;
using namespace qse;

namespace {

int map_exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidParameter:
            return 1;
        case ErrorCode::Format:
        case ErrorCode::Io:
        case ErrorCode::Sequencing:
            return 2;
        default:
            return 3;
    }
}

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::vector<std::string> argv_echo;
};

ConfigDocument load_or_default(const CommonOpts& common) {
    if (!common.config_path.empty()) return load_config(common.config_path);
    return parse_config(json::object());
}

// Invocation echo without execution-only flags, so reports are byte-identical
// for any --threads value.
json sanitized_args(const std::vector<std::string>& argv) {
    json out = json::array();
    for (std::size_t i = 0; i < argv.size(); ++i) {
        if (argv[i] == "--threads" || argv[i] == "-j") {
            ++i;
            continue;
        }
        if (argv[i].rfind("--threads=", 0) == 0) continue;
        out.push_back(argv[i]);
    }
    return out;
}

json make_echo(const std::string& command, const CommonOpts& common, const ConfigDocument& cfg,
               const json& extras = json::object()) {
    json e;
    e["command"] = command;
    e["args"] = sanitized_args(common.argv_echo);
    e["config"] = cfg.raw;
    if (common.seed) e["seed"] = *common.seed;
    for (const auto& [k, v] : extras.items()) e[k] = v;
    return e;
}

struct IngestFlags {
    std::optional<int> cases_ma;
    std::optional<int> cov_ma;
    std::optional<int> cov_lag;
    std::optional<double> seed_threshold;
    std::optional<int> seed_days;
    std::optional<double> seed_count;
};

Dataset ingest_with(const std::string& data_path, const ConfigDocument& cfg, const IngestFlags& flags) {
    IngestOptions opt = cfg.ingest;
    if (flags.cases_ma) opt.cases_ma_window = *flags.cases_ma;
    if (flags.cov_ma) opt.covariate_default.ma_window = *flags.cov_ma;
    if (flags.cov_lag) opt.covariate_default.lag_delay = *flags.cov_lag;
    if (flags.seed_threshold) opt.seed_threshold = *flags.seed_threshold;
    if (flags.seed_days) opt.seed_days = *flags.seed_days;
    if (flags.seed_count) opt.seed_count = *flags.seed_count;
    return ingest_csv(data_path, opt, cfg.make_infectiousness_profile());
}

void add_ingest_flags(CLI::App* cmd, IngestFlags& flags) {
    cmd->add_option("--cases-ma", flags.cases_ma, "moving-average window for cases");
    cmd->add_option("--cov-ma", flags.cov_ma, "moving-average window for covariates");
    cmd->add_option("--cov-lag", flags.cov_lag, "lag delay for covariates (days)");
    cmd->add_option("--seed-threshold", flags.seed_threshold, "aggregate days before the first day with this many cases into I0");
    cmd->add_option("--seed-days", flags.seed_days, "aggregate the first n days into I0");
    cmd->add_option("--seed-count", flags.seed_count, "explicit seed mass I0");
}

ScenarioSpec build_scenario(const ScenarioDocument& sd, const CovariateFrame& frame, std::uint64_t seed) {
    ScenarioSpec spec;
    spec.name = sd.name;
    spec.draws = sd.draws;
    spec.rng_seed = seed;
    const int p = frame.cols();
    spec.projected_covariates.resize(sd.horizon, p);
    for (int j = 0; j < p; ++j) {
        const auto& name = frame.names[static_cast<std::size_t>(j)];
        auto it = sd.covariates.find(name);
        if (it == sd.covariates.end())
            fail(ErrorCode::InvalidParameter,
                 "scenario '" + sd.name + "': missing projected covariate '" + name + "'");
        const auto& vals = it->second;
        if (static_cast<int>(vals.size()) == 1) {
            for (int t = 0; t < sd.horizon; ++t) spec.projected_covariates(t, j) = vals[0];
        } else if (static_cast<int>(vals.size()) == sd.horizon) {
            for (int t = 0; t < sd.horizon; ++t) spec.projected_covariates(t, j) = vals[static_cast<std::size_t>(t)];
        } else {
            fail(ErrorCode::InvalidParameter, "scenario '" + sd.name + "': covariate '" + name + "' has " +
                                                  std::to_string(vals.size()) + " values for horizon " +
                                                  std::to_string(sd.horizon));
        }
    }
    for (const auto& [name, vals] : sd.covariates) {
        bool known = false;
        for (const auto& fn : frame.names) known = known || fn == name;
        if (!known)
            fail(ErrorCode::InvalidParameter, "scenario '" + sd.name + "': unknown covariate '" + name + "'");
    }
    return spec;
}

FitState fit_dataset(const Dataset& ds, const ConfigDocument& cfg) {
    FitData data = ds.fit_data(cfg.model);
    FitState st = qsoeid_fit(data, cfg.algorithm);
    if (cfg.known_error_sigma) st.known_error_sigma = cfg.known_error_sigma;
    return st;
}

int run_simulate(const CommonOpts& common, const std::string& out_csv, const std::string& report_path,
                 std::optional<int> days, std::optional<double> seed_count) {
    ConfigDocument cfg = load_or_default(common);
    SimulationConfig sim_cfg = cfg.study.scenario;
    sim_cfg.profile = cfg.make_infectiousness_profile();
    if (common.seed) sim_cfg.rng_seed = *common.seed;
    if (days) sim_cfg.days = *days;
    if (seed_count) sim_cfg.seed_count = *seed_count;
    if (sim_cfg.covariates.empty() && !sim_cfg.params.beta.empty())
        fail(ErrorCode::InvalidParameter, "simulate: config lacks covariate generators for the given beta");

    auto sim = simulate_epidemic(sim_cfg);
    if (!out_csv.empty()) write_dataset_csv(out_csv, sim.series, sim.covariates);
    if (!report_path.empty()) {
        json echo = make_echo("simulate", common, cfg, {{"out", out_csv}});
        write_text_file(report_path, simulation_report(sim, sim_cfg, echo).dump(2) + "\n");
    }
    std::cerr << "simulated " << sim_cfg.days << " days, extinct=" << (sim.extinct ? "yes" : "no") << "\n";
    return 0;
}

int run_fit(const CommonOpts& common, const std::string& data_path, const IngestFlags& flags,
            const std::string& report_path, const std::string& csv_path, const std::string& resume_path,
            std::optional<std::string> mode) {
    ConfigDocument cfg = load_or_default(common);
    if (mode) {
        if (*mode == "forward")
            cfg.algorithm.mode = FitMode::Forward;
        else if (*mode == "backward")
            cfg.algorithm.mode = FitMode::Backward;
        else
            fail(ErrorCode::InvalidParameter, "fit: unknown mode '" + *mode + "'");
    }
    Dataset ds = ingest_with(data_path, cfg, flags);

    FitState st;
    if (!resume_path.empty()) {
        std::ifstream in(resume_path);
        if (!in) fail(ErrorCode::Io, "cannot open resume state '" + resume_path + "'");
        json prev;
        try {
            in >> prev;
        } catch (const json::exception& e) {
            fail(ErrorCode::Format, std::string("resume state: ") + e.what());
        }
        st = fit_state_from_json(prev.contains("state") ? prev.at("state") : prev, ds);
        for (int t = st.k + 1; t <= ds.series.size(); ++t) {
            DailyObservation obs;
            obs.date = ds.series.start_date + (t - 1);
            obs.cases = ds.series.incidence[static_cast<std::size_t>(t - 1)];
            obs.covariates = ds.covariates.values.row(t - 1).transpose();
            st = online_update(std::move(st), obs);
        }
        if (cfg.known_error_sigma) st.known_error_sigma = cfg.known_error_sigma;
    } else {
        st = fit_dataset(ds, cfg);
    }

    json echo = make_echo("fit", common, cfg, {{"data", data_path}});
    if (!report_path.empty()) write_text_file(report_path, fit_report(st, echo).dump(2) + "\n");
    if (!csv_path.empty()) write_text_file(csv_path, fit_csv(st));
    std::cerr << "fit through day " << st.k << ": phi0*=" << st.params.phi0_star << "\n";
    return 0;
}

int run_bootstrap(const CommonOpts& common, const std::string& data_path, const IngestFlags& flags,
                  const std::string& report_path, const std::string& csv_path, const std::string& band_csv,
                  std::optional<int> block_length, std::optional<int> replicates, std::optional<double> alpha) {
    ConfigDocument cfg = load_or_default(common);
    if (common.seed) cfg.bootstrap.rng_seed = *common.seed;
    if (block_length) cfg.bootstrap.block_length = *block_length;
    if (replicates) cfg.bootstrap.replicates = *replicates;
    if (alpha) cfg.bootstrap.alpha = *alpha;

    Dataset ds = ingest_with(data_path, cfg, flags);
    FitData data = ds.fit_data(cfg.model);
    FitState full = qsoeid_fit(data, cfg.algorithm);
    auto boot = block_bootstrap(data, cfg.algorithm, cfg.bootstrap, resolve_threads(common.threads));

    json echo = make_echo("bootstrap", common, cfg, {{"data", data_path}});
    if (!report_path.empty()) write_text_file(report_path, bootstrap_report(boot, full, echo).dump(2) + "\n");
    if (!csv_path.empty()) write_text_file(csv_path, bootstrap_csv(boot));
    if (!band_csv.empty()) write_text_file(band_csv, r_band_csv(full, r_band(boot, cfg.bootstrap.alpha)));
    std::cerr << "bootstrap: " << boot.successes() << "/" << cfg.bootstrap.replicates << " replicates, l="
              << boot.config.block_length << "\n";
    return 0;
}

int run_forecast(const CommonOpts& common, const std::string& data_path, const IngestFlags& flags,
                 const std::string& report_path, const std::string& csv_path, bool with_band) {
    ConfigDocument cfg = load_or_default(common);
    if (cfg.scenarios.empty()) fail(ErrorCode::InvalidParameter, "forecast: config has no scenario[] section");
    Dataset ds = ingest_with(data_path, cfg, flags);
    FitState st = fit_dataset(ds, cfg);

    std::vector<ScenarioSpec> specs;
    for (std::size_t i = 0; i < cfg.scenarios.size(); ++i)
        specs.push_back(build_scenario(cfg.scenarios[i], ds.covariates,
                                       common.seed.value_or(cfg.bootstrap.rng_seed) + i));
    auto scores = evaluate_scenarios(st, specs, cfg.utility);

    json echo = make_echo("forecast", common, cfg, {{"data", data_path}});
    json report = forecast_report(scores, echo);

    if (with_band) {
        FitData data = ds.fit_data(cfg.model);
        auto boot = block_bootstrap(data, cfg.algorithm, cfg.bootstrap, resolve_threads(common.threads));
        const int q = cfg.model.ar_order;
        const int p = ds.covariates.cols();
        json bands = json::array();
        for (const auto& spec : specs) {
            std::vector<std::vector<double>> rep_r(static_cast<std::size_t>(boot.successes()));
            for (int i = 0; i < boot.successes(); ++i) {
                Params pr = Params::unpack(boot.replicate_params.row(i).transpose(), q, p);
                FitState rep_state = reparameterized(st, pr);
                rep_r[static_cast<std::size_t>(i)] = forecast_path(rep_state, spec).r_hat;
            }
            json lo = json::array(), hi = json::array();
            std::vector<double> vals(rep_r.size());
            for (int t = 0; t < spec.horizon(); ++t) {
                for (std::size_t i = 0; i < rep_r.size(); ++i) vals[i] = rep_r[i][static_cast<std::size_t>(t)];
                std::sort(vals.begin(), vals.end());
                const double a = cfg.bootstrap.alpha;
                const std::size_t s = vals.size();
                auto idx = [&](double x) {
                    std::size_t v = static_cast<std::size_t>(std::ceil(x * static_cast<double>(s)));
                    return std::clamp<std::size_t>(v, 1, s) - 1;
                };
                lo.push_back(vals[idx(a / 2.0)]);
                hi.push_back(vals[idx(1.0 - a / 2.0)]);
            }
            bands.push_back({{"scenario", spec.name}, {"lower", lo}, {"upper", hi}});
        }
        report["r_bands"] = bands;
    }

    if (!report_path.empty()) write_text_file(report_path, report.dump(2) + "\n");
    if (!csv_path.empty()) {
        const Date last = ds.series.start_date + (ds.series.size() - 1);
        write_text_file(csv_path, forecast_csv(scores, last));
    }
    std::cerr << "forecast: preferred scenario '" << scores.front().name << "'\n";
    return 0;
}

int run_bench(const CommonOpts& common, const std::string& study_kind, const std::string& report_path,
              const std::string& csv_path, std::optional<int> replicates, std::optional<int> boot_replicates) {
    ConfigDocument cfg = load_or_default(common);
    StudyConfig study = cfg.study;
    study.spec = cfg.model;
    study.algo = cfg.algorithm;
    study.scenario.profile = cfg.make_infectiousness_profile();
    study.threads = resolve_threads(common.threads);
    if (common.seed) {
        study.master_seed = *common.seed;
        study.scenario.rng_seed = *common.seed;
    }
    if (replicates) study.replicates = *replicates;

    const std::string kind = study_kind.empty() ? cfg.study_type : study_kind;
    json echo = make_echo("bench", common, cfg, {{"study", kind}});

    if (kind == "bias") {
        auto report = run_bias_study(study);
        if (!report_path.empty()) write_text_file(report_path, bias_study_report(report, study, echo).dump(2) + "\n");
        if (!csv_path.empty()) write_text_file(csv_path, bias_study_csv(report));
        for (const auto& m : report.params)
            std::cerr << m.name << ": rel_bias=" << m.relative_bias << " cv=" << m.cv << "\n";
        std::cerr << "bias study wall time " << report.wall_seconds << "s\n";
        return 0;
    }
    if (kind == "coverage") {
        CoverageConfig cc;
        cc.study = study;
        cc.bootstrap = cfg.bootstrap;
        cc.bootstrap.replicates = boot_replicates.value_or(cfg.study_bootstrap_replicates);
        cc.block_lengths = cfg.study_block_lengths;
        cc.alphas = cfg.study_alphas;
        auto report = run_coverage_study(cc);
        if (!report_path.empty()) write_text_file(report_path, coverage_study_report(report, echo).dump(2) + "\n");
        if (!csv_path.empty()) write_text_file(csv_path, coverage_study_csv(report));
        std::cerr << "coverage study wall time " << report.wall_seconds << "s\n";
        return 0;
    }
    fail(ErrorCode::InvalidParameter, "bench: unknown study '" + kind + "' (use bias or coverage)");
}

int run_validate(const CommonOpts& common, const std::string& data_path, const IngestFlags& flags) {
    ConfigDocument cfg = load_or_default(common);
    Dataset ds = ingest_with(data_path, cfg, flags);
    const int n = ds.series.size();
    std::cout << "rows: " << n << "\n";
    std::cout << "start: " << ds.series.start_date.to_string() << ", end: "
              << (ds.series.start_date + (n - 1)).to_string() << "\n";
    std::cout << "seed_count: " << format_double(ds.series.seed_count) << "\n";
    std::cout << "covariates: " << ds.covariates.cols() << "\n";
    int zero_days = 0;
    double max_cases = 0.0;
    for (double v : ds.series.incidence) {
        if (v == 0.0) ++zero_days;
        max_cases = std::max(max_cases, v);
    }
    std::cout << "zero-incidence days: " << zero_days << "\n";
    std::cout << "max daily cases: " << format_double(max_cases) << "\n";
    for (double rho : {5.0, 10.0, 15.0}) {
        int above = 0;
        for (double v : ds.series.incidence)
            if (v >= rho) ++above;
        std::cout << "days with cases >= " << rho << ": " << above << "\n";
    }
    for (const auto& entry : ds.provenance.transform_log) std::cout << "transform: " << entry << "\n";
    auto lambda = force_of_infection(ds.series, ds.profile).values;
    int lam_zero = 0;
    for (double v : lambda)
        if (v == 0.0) ++lam_zero;
    std::cout << "zero force-of-infection days: " << lam_zero << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasi-score estimation of time-varying epidemic transmission"};
    app.require_subcommand(1);

    CommonOpts common;
    for (int i = 1; i < argc; ++i) common.argv_echo.emplace_back(argv[i]);

    // shared options registered per subcommand
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "JSON configuration document");
        cmd->add_option("--seed", common.seed, "RNG seed override");
        cmd->add_option("--threads,-j", common.threads, "worker threads (default: QSE_THREADS or hardware)");
    };

    auto* sim = app.add_subcommand("simulate", "generate a synthetic epidemic");
    std::string sim_out, sim_report;
    std::optional<int> sim_days;
    std::optional<double> sim_seed_count;
    add_common(sim);
    sim->add_option("--out", sim_out, "output dataset CSV");
    sim->add_option("--report", sim_report, "output JSON report");
    sim->add_option("--days", sim_days, "number of days");
    sim->add_option("--seed-count", sim_seed_count, "seed mass I0");

    auto* fit = app.add_subcommand("fit", "estimate R_t and covariate effects");
    std::string fit_data, fit_report_path, fit_csv_path, fit_resume;
    std::optional<std::string> fit_mode;
    IngestFlags fit_flags;
    add_common(fit);
    fit->add_option("--data", fit_data, "input CSV (date,cases,covariates)")->required();
    fit->add_option("--report", fit_report_path, "output JSON report");
    fit->add_option("--csv", fit_csv_path, "output per-day CSV");
    fit->add_option("--mode", fit_mode, "forward or backward");
    fit->add_option("--resume", fit_resume, "resume from a previous fit report (online update)");
    add_ingest_flags(fit, fit_flags);

    auto* boot = app.add_subcommand("bootstrap", "moving-block bootstrap intervals");
    std::string boot_data, boot_report, boot_csv, boot_band;
    std::optional<int> boot_block, boot_reps;
    std::optional<double> boot_alpha;
    IngestFlags boot_flags;
    add_common(boot);
    boot->add_option("--data", boot_data, "input CSV")->required();
    boot->add_option("--report", boot_report, "output JSON report");
    boot->add_option("--csv", boot_csv, "per-replicate parameter CSV");
    boot->add_option("--band-csv", boot_band, "per-day R band CSV");
    boot->add_option("--block-length", boot_block, "block length (default: 6.7 N^(1/3))");
    boot->add_option("--replicates", boot_reps, "bootstrap replicates");
    boot->add_option("--alpha", boot_alpha, "significance level");
    add_ingest_flags(boot, boot_flags);

    auto* fc = app.add_subcommand("forecast", "project R_t and cases under scenarios");
    std::string fc_data, fc_report, fc_csv;
    bool fc_band = false;
    IngestFlags fc_flags;
    add_common(fc);
    fc->add_option("--data", fc_data, "input CSV")->required();
    fc->add_option("--report", fc_report, "output JSON report");
    fc->add_option("--csv", fc_csv, "per-day forecast CSV");
    fc->add_flag("--band", fc_band, "bootstrap forecast bands (slow)");
    add_ingest_flags(fc, fc_flags);

    auto* bench = app.add_subcommand("bench", "simulation studies (bias, coverage)");
    std::string bench_study, bench_report, bench_csv;
    std::optional<int> bench_reps, bench_boot_reps;
    add_common(bench);
    bench->add_option("--study", bench_study, "bias or coverage (default: config study.type)");
    bench->add_option("--report", bench_report, "output JSON report");
    bench->add_option("--csv", bench_csv, "output CSV");
    bench->add_option("--replicates", bench_reps, "replicates / experiments override");
    bench->add_option("--bootstrap-replicates", bench_boot_reps, "bootstrap replicates per experiment");

    auto* val = app.add_subcommand("validate", "lint a dataset and report summary statistics");
    std::string val_data;
    IngestFlags val_flags;
    add_common(val);
    val->add_option("--data", val_data, "input CSV")->required();
    add_ingest_flags(val, val_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (sim->parsed()) return run_simulate(common, sim_out, sim_report, sim_days, sim_seed_count);
        if (fit->parsed())
            return run_fit(common, fit_data, fit_flags, fit_report_path, fit_csv_path, fit_resume, fit_mode);
        if (boot->parsed())
            return run_bootstrap(common, boot_data, boot_flags, boot_report, boot_csv, boot_band, boot_block,
                                 boot_reps, boot_alpha);
        if (fc->parsed()) return run_forecast(common, fc_data, fc_flags, fc_report, fc_csv, fc_band);
        if (bench->parsed())
            return run_bench(common, bench_study, bench_report, bench_csv, bench_reps, bench_boot_reps);
        if (val->parsed()) return run_validate(common, val_data, val_flags);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return map_exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
