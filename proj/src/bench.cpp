#include "qse/bench.hpp"

#include <chrono>
#include <cmath>

#include "qse/errors.hpp"
#include "qse/parallel.hpp"
#include "qse/rng.hpp"

namespace qse {

void StudyConfig::validate() const {
    if (replicates < 2) fail(ErrorCode::InvalidParameter, "study: need at least 2 replicates");
    scenario.validate();
    spec.validate();
    algo.validate();
}

void CoverageConfig::validate() const {
    study.validate();
    if (block_lengths.empty() || alphas.empty())
        fail(ErrorCode::InvalidParameter, "coverage study: empty block-length or alpha grid");
    for (double a : alphas)
        if (!(a > 0.0 && a < 1.0)) fail(ErrorCode::InvalidParameter, "coverage study: alpha must be in (0,1)");
}

std::vector<std::string> packed_param_names(int q, int p) {
    std::vector<std::string> names{"phi0_star"};
    for (int i = 1; i <= q; ++i) names.push_back("theta" + std::to_string(i));
    for (int j = 1; j <= p; ++j) names.push_back("beta" + std::to_string(j));
    return names;
}

FitData fit_data_from(const SimulatedEpidemic& sim, const ModelSpec& spec, const InfectiousnessProfile& profile,
                      int fit_covariates) {
    FitData data;
    data.series = sim.series;
    data.profile = profile;
    data.spec = spec;
    const int p_all = sim.covariates.cols();
    const int p_fit = fit_covariates < 0 ? p_all : fit_covariates;
    if (p_fit > p_all) fail(ErrorCode::InvalidParameter, "study: fit_covariates exceeds simulated covariates");
    data.covariates.names.assign(sim.covariates.names.begin(), sim.covariates.names.begin() + p_fit);
    data.covariates.values = sim.covariates.values.leftCols(p_fit);
    data.covariates.transforms.assign(static_cast<std::size_t>(p_fit), ColumnTransform{});
    return data;
}

namespace {

constexpr int kMaxAttemptsPerReplicate = 64;

struct ReplicateDraw {
    SimulatedEpidemic sim;
    int extinct_discarded = 0;
};

// Draws replicates until one survives; extinct draws are counted, not used.
ReplicateDraw draw_replicate(const SimulationConfig& tmpl, std::uint64_t master, int replicate) {
    ReplicateDraw out;
    for (int attempt = 0; attempt < kMaxAttemptsPerReplicate; ++attempt) {
        SimulationConfig cfg = tmpl;
        std::uint64_t s = master;
        splitmix64(s);
        cfg.rng_seed = s ^ (static_cast<std::uint64_t>(replicate) << 20) ^ static_cast<std::uint64_t>(attempt);
        out.sim = simulate_epidemic(cfg);
        if (!out.sim.extinct) return out;
        ++out.extinct_discarded;
    }
    fail(ErrorCode::DegenerateData, "study: replicate " + std::to_string(replicate) +
                                        " kept going extinct; scenario is too fragile");
}

double default_phi0_star_oracle(const SimulationConfig& scenario) {
    double factor = 1.0;
    try {
        factor = error_mean_factor(scenario.error_spec);
    } catch (const Error&) {
        factor = 1.0; // no closed form; report against the raw intercept
    }
    return scenario.params.phi0 + std::log(factor);
}

Eigen::VectorXd oracle_vector(const StudyConfig& config, int q, int p) {
    Eigen::VectorXd oracle(1 + q + p);
    oracle(0) = config.phi0_star_oracle.value_or(default_phi0_star_oracle(config.scenario));
    for (int i = 0; i < q; ++i)
        oracle(1 + i) = i < static_cast<int>(config.scenario.params.theta.size())
                            ? config.scenario.params.theta[static_cast<std::size_t>(i)]
                            : 0.0;
    for (int j = 0; j < p; ++j)
        oracle(1 + q + j) = j < static_cast<int>(config.scenario.params.beta.size())
                                ? config.scenario.params.beta[static_cast<std::size_t>(j)]
                                : 0.0;
    return oracle;
}

} // namespace

StudyReport run_bias_study(const StudyConfig& config) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const int q = config.spec.ar_order;
    const int p = config.fit_covariates < 0 ? static_cast<int>(config.scenario.covariates.size())
                                            : config.fit_covariates;
    const int dim = 1 + q + p;
    const int n_s = config.replicates;

    struct RepResult {
        bool ok = false;
        Eigen::VectorXd est;
        int extinct = 0;
        int failed = 0;
    };
    std::vector<RepResult> results(static_cast<std::size_t>(n_s));

    parallel_for(static_cast<std::size_t>(n_s), config.threads, [&](std::size_t i) {
        auto& res = results[i];
        // A failed fit is replaced by a fresh draw with a shifted sub-seed.
        for (int attempt = 0; attempt < kMaxAttemptsPerReplicate && !res.ok; ++attempt) {
            auto draw = draw_replicate(config.scenario, config.master_seed + 7919ULL * attempt,
                                       static_cast<int>(i));
            res.extinct += draw.extinct_discarded;
            FitData data = fit_data_from(draw.sim, config.spec, config.scenario.profile, config.fit_covariates);
            try {
                if (config.estimator_override) {
                    res.est = config.estimator_override(data);
                } else {
                    res.est = qsoeid_fit(data, config.algo).params.packed();
                }
                res.ok = true;
            } catch (const Error&) {
                ++res.failed;
            }
        }
    });

    StudyReport report;
    report.estimates.resize(n_s, dim);
    int total_failures = 0;
    for (int i = 0; i < n_s; ++i) {
        const auto& res = results[static_cast<std::size_t>(i)];
        report.extinct_replicates += res.extinct;
        total_failures += res.failed;
        if (!res.ok)
            fail(ErrorCode::DegenerateData, "study: replicate " + std::to_string(i) + " never produced a fit");
        if (res.est.size() != dim) fail(ErrorCode::Internal, "study: estimator returned wrong dimension");
        report.estimates.row(i) = res.est;
    }
    report.failed_replicates = total_failures;
    if (total_failures * 5 > n_s)
        fail(ErrorCode::DegenerateData, "study: more than 20% of replicate fits failed (" +
                                            std::to_string(total_failures) + "/" + std::to_string(n_s) + ")");

    const auto oracle = oracle_vector(config, q, p);
    const auto names = packed_param_names(q, p);
    for (int j = 0; j < dim; ++j) {
        ParamMetrics m;
        m.name = names[static_cast<std::size_t>(j)];
        m.oracle = oracle(j);
        const double mean = report.estimates.col(j).mean();
        m.mean = mean;
        m.bias = (report.estimates.col(j).array() - oracle(j)).sum() / static_cast<double>(n_s);
        m.relative_bias = oracle(j) != 0.0 ? m.bias / oracle(j) : 0.0;
        const double ss = (report.estimates.col(j).array() - mean).square().sum() / static_cast<double>(n_s);
        m.cv = mean != 0.0 ? std::sqrt(ss) / mean : 0.0;
        report.params.push_back(std::move(m));
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

const CoverageCell& CoverageReport::cell(int block_length, double alpha) const {
    for (const auto& c : cells)
        if (c.block_length == block_length && std::abs(c.alpha - alpha) < 1e-12) return c;
    fail(ErrorCode::InvalidParameter, "coverage report: no cell for requested (block length, alpha)");
}

CoverageReport run_coverage_study(const CoverageConfig& config) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const int q = config.study.spec.ar_order;
    const int p = config.study.fit_covariates < 0 ? static_cast<int>(config.study.scenario.covariates.size())
                                                  : config.study.fit_covariates;
    const int dim = 1 + q + p;
    const int n_exp = config.study.replicates;
    const int n_days = config.study.scenario.days;

    std::vector<int> lengths;
    for (int l : config.block_lengths) {
        BootstrapConfig bc = config.bootstrap;
        bc.block_length = l;
        lengths.push_back(bc.resolve_block_length(n_days, p, q));
    }

    struct ExpResult {
        bool ok = false;
        int extinct = 0;
        // covered(l_index, alpha_index * dim + j)
        Eigen::MatrixXd covered;
    };
    std::vector<ExpResult> results(static_cast<std::size_t>(n_exp));
    const auto oracle = oracle_vector(config.study, q, p);

    parallel_for(static_cast<std::size_t>(n_exp), config.study.threads, [&](std::size_t e) {
        auto& res = results[e];
        res.covered.setZero(static_cast<int>(lengths.size()),
                            static_cast<int>(config.alphas.size()) * dim);
        for (int attempt = 0; attempt < kMaxAttemptsPerReplicate && !res.ok; ++attempt) {
            auto draw = draw_replicate(config.study.scenario, config.study.master_seed + 104729ULL * attempt,
                                       static_cast<int>(e));
            res.extinct += draw.extinct_discarded;
            FitData data = fit_data_from(draw.sim, config.study.spec, config.study.scenario.profile,
                                         config.study.fit_covariates);
            try {
                FitState full = qsoeid_fit(data, config.study.algo);
                for (std::size_t li = 0; li < lengths.size(); ++li) {
                    BootstrapConfig bc = config.bootstrap;
                    bc.block_length = lengths[li];
                    std::uint64_t bs = config.study.master_seed;
                    splitmix64(bs);
                    bc.rng_seed = bs ^ (static_cast<std::uint64_t>(e) << 24) ^
                                  (static_cast<std::uint64_t>(li) << 8) ^ static_cast<std::uint64_t>(attempt);
                    auto boot = block_bootstrap(data, config.study.algo, bc, 1);
                    for (std::size_t ai = 0; ai < config.alphas.size(); ++ai) {
                        for (int j = 0; j < dim; ++j) {
                            auto [lo, hi] =
                                confidence_interval(boot, full, j, config.alphas[ai], CiMethod::Basic);
                            const bool inside = oracle(j) >= lo && oracle(j) <= hi;
                            res.covered(static_cast<int>(li), static_cast<int>(ai) * dim + j) = inside ? 1.0 : 0.0;
                        }
                    }
                }
                res.ok = true;
            } catch (const Error&) {
                // refit or bootstrap failed; redraw
            }
        }
    });

    CoverageReport report;
    report.param_names = packed_param_names(q, p);
    report.oracle.assign(oracle.data(), oracle.data() + oracle.size());

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<int>(lengths.size()),
                                                 static_cast<int>(config.alphas.size()) * dim);
    int ok_count = 0;
    for (const auto& res : results) {
        report.extinct_replicates += res.extinct;
        if (!res.ok) {
            ++report.failed_experiments;
            continue;
        }
        sums += res.covered;
        ++ok_count;
    }
    if (ok_count * 5 < n_exp * 4)
        fail(ErrorCode::DegenerateData, "coverage study: more than 20% of experiments failed");

    for (std::size_t li = 0; li < lengths.size(); ++li) {
        for (std::size_t ai = 0; ai < config.alphas.size(); ++ai) {
            CoverageCell cell;
            cell.block_length = lengths[li];
            cell.alpha = config.alphas[ai];
            cell.experiments = ok_count;
            for (int j = 0; j < dim; ++j)
                cell.coverage.push_back(sums(static_cast<int>(li), static_cast<int>(ai) * dim + j) /
                                        static_cast<double>(ok_count));
            report.cells.push_back(std::move(cell));
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

} // namespace qse
