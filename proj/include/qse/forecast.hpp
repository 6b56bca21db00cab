#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qse/estimate.hpp"

namespace qse {

struct ScenarioSpec {
    std::string name;
    Eigen::MatrixXd projected_covariates; // horizon x p
    int draws = 0;                        // 0 -> mean path only
    std::uint64_t rng_seed = 1;

    int horizon() const { return static_cast<int>(projected_covariates.rows()); }
    void validate(int p) const;
};

struct ForecastResult {
    std::string scenario;
    std::vector<double> r_hat;      // R-hat_{k+1..k+m}
    std::vector<double> cases;      // mean-path case forecast
    Eigen::MatrixXd case_draws;     // draws x m when stochastic
};

ForecastResult forecast_path(const FitState& fit, const ScenarioSpec& scenario);

// Utility components: case burden, three user-supplied hooks, and the
// threshold-penalized reproduction number R*1(R>=1) + 1(R<1).
struct UtilityWeights {
    double case_weight = 1.0;
    double threshold_r_weight = 0.0;
    std::function<double(const ForecastResult&)> economy;
    std::function<double(const ForecastResult&)> mental_health;
    std::function<double(const ForecastResult&)> hospital_capacity;

    void validate() const;
};

struct ScenarioScore {
    std::string name;
    double total = 0.0;
    double case_component = 0.0;
    double economy_component = 0.0;
    double mental_health_component = 0.0;
    double hospital_component = 0.0;
    double threshold_r_component = 0.0;
    ForecastResult forecast;
};

// Scores every scenario and returns them sorted ascending by total utility
// (ties broken by name); the first entry is the preferred option.
std::vector<ScenarioScore> evaluate_scenarios(const FitState& fit, const std::vector<ScenarioSpec>& scenarios,
                                              const UtilityWeights& utility);

} // namespace qse
