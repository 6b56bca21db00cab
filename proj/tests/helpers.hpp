#pragma once

// Shared fixtures for the test suites: the reference simulation scenario
// (AR(1) transmission with a temperature-like and a distancing-like
// covariate) and small numeric utilities.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "qse/estimate.hpp"
#include "qse/simulate.hpp"

namespace qse::testing {

inline InfectiousnessProfile reference_profile() { return discretize_infectiousness(2.5, 0.255, 21); }

// T=300 epidemic with (phi0, theta1, beta1, beta2) = (.5, .7, -.02, -.125);
// covariates mimic seasonal temperature and a social-distancing rollout.
inline SimulationConfig scenario1_config(std::uint64_t seed, double gaussian_sigma = 0.1) {
    SimulationConfig cfg;
    cfg.days = 300;
    cfg.seed_count = 300.0;
    cfg.profile = reference_profile();
    cfg.params.phi0 = 0.5;
    cfg.params.theta = {0.7};
    cfg.params.beta = {-0.02, -0.125};
    if (gaussian_sigma > 0.0)
        cfg.error_spec = GaussianError{gaussian_sigma};
    else
        cfg.error_spec = DegenerateError{};
    cfg.count_law = PoissonCounts{};
    cfg.covariates = {
        {"temperature", SeasonalCovariate{25.0, 8.0, 365.0, -91.0, 0.9, 0.6}},
        {"distancing", RampCovariate{0.0, -0.6, 30, 75, 0.8, 0.02}},
    };
    cfg.rng_seed = seed;
    return cfg;
}

inline FitData fit_data_of(const SimulatedEpidemic& sim, int ar_order = 1) {
    FitData data;
    data.series = sim.series;
    data.covariates = sim.covariates;
    data.profile = reference_profile();
    data.spec.ar_order = ar_order;
    return data;
}

inline double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace qse::testing
