#include "qse/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qse/errors.hpp"
#include "qse/rng.hpp"

namespace qse {

void ScenarioSpec::validate(int p) const {
    if (horizon() < 1) fail(ErrorCode::InvalidParameter, "scenario '" + name + "': horizon must be >= 1");
    if (static_cast<int>(projected_covariates.cols()) != p)
        fail(ErrorCode::InvalidParameter, "scenario '" + name + "': covariate columns do not match the fitted model");
    if (!projected_covariates.allFinite())
        fail(ErrorCode::InvalidParameter, "scenario '" + name + "': non-finite projected covariate");
    if (draws < 0) fail(ErrorCode::InvalidParameter, "scenario '" + name + "': draws must be >= 0");
}

void UtilityWeights::validate() const {
    if (case_weight < 0.0 || threshold_r_weight < 0.0)
        fail(ErrorCode::InvalidParameter, "utility: weights must be nonnegative");
    if (case_weight == 0.0 && threshold_r_weight == 0.0 && !economy && !mental_health && !hospital_capacity)
        fail(ErrorCode::InvalidParameter, "utility: at least one component must be active");
}

namespace {

// Force of infection at extended day t (1-based over history + forecast).
double lambda_at(const std::vector<double>& incidence, const std::vector<double>& history,
                 const InfectiousnessProfile& profile, int t) {
    const int hist_len = static_cast<int>(history.size());
    double acc = 0.0;
    const int smax = std::min(profile.horizon, t - 1 + hist_len);
    for (int s = 1; s <= smax; ++s) {
        const int day = t - s;
        const double inc =
            day >= 1 ? incidence[static_cast<std::size_t>(day - 1)] : history[static_cast<std::size_t>(hist_len - 1 + day)];
        acc += inc * profile.weights[static_cast<std::size_t>(s - 1)];
    }
    return acc;
}

double projected_z_dot(const FitState& fit, const ScenarioSpec& sc, int t /*1-based extended day*/,
                       const Eigen::VectorXd& beta) {
    const int k = fit.k;
    double acc = 0.0;
    for (int j = 0; j < beta.size(); ++j) {
        const double z = t <= k ? fit.data.covariates.values(t - 1, j) : sc.projected_covariates(t - k - 1, j);
        acc += z * beta(j);
    }
    return acc;
}

} // namespace

ForecastResult forecast_path(const FitState& fit, const ScenarioSpec& scenario) {
    const int p = fit.data.covariates.cols();
    const int q = static_cast<int>(fit.params.theta.size());
    scenario.validate(p);
    const int k = fit.k;
    const int m = scenario.horizon();
    const bool centered = fit.data.spec.lag_family == LagFamily::CenteredLogLag;

    // Lag source: corrected estimates over history, forecast values beyond.
    std::vector<double> log_r_ext = fit.lag_log_r;
    log_r_ext.resize(static_cast<std::size_t>(k + m), 0.0);

    ForecastResult out;
    out.scenario = scenario.name;
    out.r_hat.reserve(static_cast<std::size_t>(m));
    out.cases.reserve(static_cast<std::size_t>(m));

    std::vector<double> history = fit.data.series.pre_history;
    if (history.empty()) history.push_back(fit.data.series.seed_count);

    auto step_log_r = [&](int t) {
        double eta = fit.params.phi0_star + projected_z_dot(fit, scenario, t, fit.params.beta);
        for (int i = 1; i <= q; ++i) {
            const int lag_day = t - i;
            double fi = lag_day >= 1 ? log_r_ext[static_cast<std::size_t>(lag_day - 1)] : 0.0;
            if (centered && lag_day >= 1)
                fi -= fit.params.phi0_star + projected_z_dot(fit, scenario, lag_day, fit.params.beta);
            eta += fit.params.theta(i - 1) * fi;
        }
        return eta;
    };

    // Mean path: expected counts feed the convolution.
    std::vector<double> inc = fit.data.series.incidence;
    inc.resize(static_cast<std::size_t>(k + m), 0.0);
    for (int t = k + 1; t <= k + m; ++t) {
        const double eta = step_log_r(t);
        log_r_ext[static_cast<std::size_t>(t - 1)] = eta;
        const double r = std::exp(eta);
        const double lam = lambda_at(inc, history, fit.data.profile, t);
        const double cases = r * lam;
        if (cases > 1e12)
            fail(ErrorCode::Diverged, "forecast diverged at day " + std::to_string(t - k) + " of scenario '" +
                                          scenario.name + "'");
        inc[static_cast<std::size_t>(t - 1)] = cases;
        out.r_hat.push_back(r);
        out.cases.push_back(cases);
    }

    if (scenario.draws > 0) {
        out.case_draws.resize(scenario.draws, m);
        const bool nb = fit.dispersion > 1.0 + 1e-6;
        for (int d = 0; d < scenario.draws; ++d) {
            auto rng = make_stream(scenario.rng_seed, static_cast<std::uint64_t>(d));
            std::vector<double> inc_d = fit.data.series.incidence;
            inc_d.resize(static_cast<std::size_t>(k + m), 0.0);
            for (int t = k + 1; t <= k + m; ++t) {
                const double r = out.r_hat[static_cast<std::size_t>(t - k - 1)]; // R recursion has no count feedback
                const double lam = lambda_at(inc_d, history, fit.data.profile, t);
                double mean = r * lam;
                if (mean > 1e12)
                    fail(ErrorCode::Diverged, "forecast draw diverged at day " + std::to_string(t - k) +
                                                  " of scenario '" + scenario.name + "'");
                double cases = 0.0;
                if (mean > 0.0) {
                    double lambda_draw = mean;
                    if (nb) {
                        std::gamma_distribution<double> g(mean / (fit.dispersion - 1.0), fit.dispersion - 1.0);
                        lambda_draw = g(rng);
                    }
                    if (lambda_draw > 0.0) {
                        std::poisson_distribution<long long> pois(lambda_draw);
                        cases = static_cast<double>(pois(rng));
                    }
                }
                inc_d[static_cast<std::size_t>(t - 1)] = cases;
                out.case_draws(d, t - k - 1) = cases;
            }
        }
    }
    return out;
}

std::vector<ScenarioScore> evaluate_scenarios(const FitState& fit, const std::vector<ScenarioSpec>& scenarios,
                                              const UtilityWeights& utility) {
    if (scenarios.empty()) fail(ErrorCode::InvalidParameter, "evaluate_scenarios: no scenarios given");
    utility.validate();

    std::vector<ScenarioScore> scores;
    scores.reserve(scenarios.size());
    for (const auto& sc : scenarios) {
        ScenarioScore s;
        s.name = sc.name;
        s.forecast = forecast_path(fit, sc);
        const double end_cases = s.forecast.cases.back();
        const double end_r = s.forecast.r_hat.back();
        s.case_component = utility.case_weight * end_cases;
        s.economy_component = utility.economy ? utility.economy(s.forecast) : 0.0;
        s.mental_health_component = utility.mental_health ? utility.mental_health(s.forecast) : 0.0;
        s.hospital_component = utility.hospital_capacity ? utility.hospital_capacity(s.forecast) : 0.0;
        s.threshold_r_component = utility.threshold_r_weight * (end_r >= 1.0 ? end_r : 1.0);
        s.total = s.case_component + s.economy_component + s.mental_health_component + s.hospital_component +
                  s.threshold_r_component;
        scores.push_back(std::move(s));
    }
    std::sort(scores.begin(), scores.end(), [](const ScenarioScore& a, const ScenarioScore& b) {
        if (a.total != b.total) return a.total < b.total;
        return a.name < b.name;
    });
    return scores;
}

} // namespace qse
