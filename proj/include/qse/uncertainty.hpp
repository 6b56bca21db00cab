#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qse/estimate.hpp"

namespace qse {

enum class CiMethod { Basic, Percentile };

struct BootstrapConfig {
    int block_length = 0; // 0 -> round(6.7 * N^(1/3)), clamped to [p+q+2, N/4]
    int replicates = 200;
    double alpha = 0.05;
    CiMethod method = CiMethod::Basic;
    std::uint64_t rng_seed = 1;

    int resolve_block_length(int n, int p, int q) const;
    void validate(int n, int p, int q) const;
};

struct FailedReplicate {
    int index = 0;
    std::string reason;
};

struct BootstrapResult {
    Eigen::MatrixXd replicate_params;  // successes x (1+q+p)
    Eigen::MatrixXd replicate_r_paths; // successes x N
    std::vector<int> replicate_ids;
    BootstrapConfig config;
    std::vector<FailedReplicate> failures;

    int successes() const { return static_cast<int>(replicate_params.rows()); }
};

BootstrapResult block_bootstrap(const FitData& data, const AlgorithmConfig& algo, const BootstrapConfig& config,
                                std::size_t threads = 1);

std::pair<double, double> confidence_interval(const BootstrapResult& result, const FitState& full_fit,
                                              int param_index, double alpha, CiMethod method);

// Pointwise empirical-quantile band over replicate R paths.
std::vector<std::pair<double, double>> r_band(const BootstrapResult& result, double alpha);

} // namespace qse
