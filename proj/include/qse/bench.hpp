#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qse/estimate.hpp"
#include "qse/simulate.hpp"
#include "qse/uncertainty.hpp"

namespace qse {

struct StudyConfig {
    SimulationConfig scenario; // template; per-replicate seeds derived from master_seed
    ModelSpec spec;
    AlgorithmConfig algo;
    int replicates = 200;
    std::uint64_t master_seed = 1;
    std::size_t threads = 1;
    int fit_covariates = -1; // fit only the first m covariate columns (-1 = all)
    std::optional<double> phi0_star_oracle; // default: phi0 + log E[e^eps]
    // Test hook: replaces the estimator; returns packed (phi0*, theta, beta).
    std::function<Eigen::VectorXd(const FitData&)> estimator_override;

    void validate() const;
};

struct ParamMetrics {
    std::string name;
    double oracle = 0.0;
    double mean = 0.0;
    double relative_bias = 0.0; // sum(est - oracle) / (N_s * oracle); 0 when oracle == 0
    double bias = 0.0;          // sum(est - oracle) / N_s
    double cv = 0.0;            // sqrt(sum (est - mean)^2 / N_s) / mean
};

struct StudyReport {
    std::vector<ParamMetrics> params;
    Eigen::MatrixXd estimates; // replicates x dim
    int extinct_replicates = 0;
    int failed_replicates = 0;
    double wall_seconds = 0.0;
};

StudyReport run_bias_study(const StudyConfig& config);

struct CoverageConfig {
    StudyConfig study;             // replicates = number of experiments
    BootstrapConfig bootstrap;     // per-experiment replication settings
    std::vector<int> block_lengths{0}; // 0 entries resolve to the default rule
    std::vector<double> alphas{0.05};

    void validate() const;
};

struct CoverageCell {
    int block_length = 0;
    double alpha = 0.0;
    std::vector<double> coverage; // per parameter (packed order)
    int experiments = 0;
};

struct CoverageReport {
    std::vector<std::string> param_names;
    std::vector<double> oracle; // packed
    std::vector<CoverageCell> cells;
    int extinct_replicates = 0;
    int failed_experiments = 0;
    double wall_seconds = 0.0;

    const CoverageCell& cell(int block_length, double alpha) const;
};

CoverageReport run_coverage_study(const CoverageConfig& config);

// Shared by both studies: simulate until a usable (non-extinct) replicate
// comes out, fitting covariate subsets for mis-specification scenarios.
FitData fit_data_from(const SimulatedEpidemic& sim, const ModelSpec& spec, const InfectiousnessProfile& profile,
                      int fit_covariates = -1);

std::vector<std::string> packed_param_names(int q, int p);

} // namespace qse
