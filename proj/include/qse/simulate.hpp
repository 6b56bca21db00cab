#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "qse/core.hpp"

namespace qse {

// ---- error term of the log-transmission recursion ----
struct DegenerateError {};
struct GaussianError {
    double sigma = 0.1;
};
struct StudentTError {
    double df = 5.0;
    double scale = 0.1;
};
struct CustomIidError {
    std::function<double(std::mt19937_64&)> draw;
};
using ErrorSpec = std::variant<DegenerateError, GaussianError, StudentTError, CustomIidError>;

// Mean of e^eps, where defined (the intercept absorption constant).
double error_mean_factor(const ErrorSpec& spec);

// ---- daily count law given the conditional mean ----
struct PoissonCounts {};
struct NegativeBinomialCounts {
    double phi = 2.0; // variance = phi * mean, phi > 1
};
using CountLaw = std::variant<PoissonCounts, NegativeBinomialCounts>;

// ---- covariate generators ----
struct SeasonalCovariate { // temperature-like
    double mean = 20.0;
    double amplitude = 8.0;
    double period = 365.0;
    double phase = 0.0; // days
    double ar_rho = 0.9;
    double ar_sigma = 0.0; // innovation sd
};
struct RampCovariate { // social-distancing-like transition between plateaus
    double start_level = 0.0;
    double end_level = -0.6;
    int ramp_start = 30;
    int ramp_end = 60;
    double ar_rho = 0.8;
    double ar_sigma = 0.0;
};
struct UniformCovariate {
    double lo = 0.0;
    double hi = 1.0;
};
struct NormalCovariate {
    double mean = 0.0;
    double sigma = 1.0;
};
struct ConstantCovariate {
    double value = 0.0;
};
struct ValuesCovariate { // user-supplied column
    std::vector<double> values;
};
using CovariateGen = std::variant<SeasonalCovariate, RampCovariate, UniformCovariate, NormalCovariate,
                                  ConstantCovariate, ValuesCovariate>;

struct CovariateSpec {
    std::string name;
    CovariateGen gen;
};

struct SimulationParams {
    double phi0 = 0.0;
    std::vector<double> theta;
    std::vector<double> beta;
};

struct SimulationConfig {
    int days = 300;
    double seed_count = 100.0;
    InfectiousnessProfile profile;
    SimulationParams params;
    ErrorSpec error_spec = DegenerateError{};
    CountLaw count_law = PoissonCounts{};
    std::vector<CovariateSpec> covariates;
    std::uint64_t rng_seed = 1;
    Date start_date = Date::from_ymd(2020, 2, 1);

    void validate() const;
};

struct SimulatedEpidemic {
    EpidemicSeries series;
    CovariateFrame covariates;
    std::vector<double> true_r_path;
    std::vector<double> true_errors;
    bool extinct = false;
};

CovariateFrame generate_covariates(const std::vector<CovariateSpec>& specs, int days, std::uint64_t rng_seed);
SimulatedEpidemic simulate_epidemic(const SimulationConfig& config);

} // namespace qse
