#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qse/core.hpp"

namespace qse {

enum class FitMode { Forward, Backward };

struct AlgorithmConfig {
    int tau0 = 0; // 0 -> max(14, q + p + 3)
    double outer_tol = 1e-6;
    int outer_max_iter = 500;
    double inner_tol = 1e-9; // scaled by total counts
    int inner_max_iter = 60;
    double theta_bound = 1.0 - 1e-6;
    double residual_clip = 3.0; // clip on working residuals feeding the lag path
    FitMode mode = FitMode::Forward;

    void validate() const;
    int resolve_tau0(int q, int p) const;
};

// Immutable inputs shared by all estimation entry points.
struct FitData {
    EpidemicSeries series;
    CovariateFrame covariates;
    InfectiousnessProfile profile;
    ModelSpec spec;

    int size() const { return series.size(); }
    void validate() const;
};

struct Params {
    double phi0_star = 0.0; // intercept with E[e^eps] absorbed
    Eigen::VectorXd theta;  // q
    Eigen::VectorXd beta;   // p

    int dim() const { return 1 + static_cast<int>(theta.size()) + static_cast<int>(beta.size()); }
    Eigen::VectorXd packed() const;
    static Params unpack(const Eigen::VectorXd& v, int q, int p);
};

struct DayDiagnostics {
    int day = 0;
    int inner_iterations = 0;
    double theta_step = 0.0; // max_i |theta_i^{(k)} - theta_i^{(k-1)}|
    double phi0_step = 0.0;
    double objective = 0.0; // profile objective at the accepted parameters
};

struct FitState {
    Params params;
    double dispersion = 1.0;
    std::vector<double> r_path;  // reported R-hat (mode-dependent)
    std::vector<double> lambda;  // Lambda_1..Lambda_k
    int k = 0;                   // last assimilated day
    int tau0 = 0;
    FitMode mode = FitMode::Forward;
    std::vector<DayDiagnostics> history;
    bool theta_projected = false; // theta hit the l1 boundary at least once
    std::optional<double> known_error_sigma;

    // Internal state needed to resume online updates.
    std::vector<double> lag_log_r;  // residual-corrected log R estimates (lag source)
    std::vector<double> work_log_r; // predicted log R under final parameters
    FitData data;
    AlgorithmConfig algo;

    // Intercept net of the absorbed error mean, available when the error
    // variance is known: phi0 = phi0* - sigma^2/2 under gaussian errors.
    std::optional<double> phi0_unabsorbed() const;
};

// Quasi-score U(gamma) over t = q+1..N; lag terms taken from r_path (R values).
Eigen::VectorXd quasi_score(const Params& params, const FitData& data, const std::vector<double>& r_path);

struct NoErrorFit {
    Params params;
    std::vector<double> r_path; // recursion-implied path on the window
    double score_norm = 0.0;
    double score_scale = 1.0;
    bool theta_projected = false;
};

// Root of the quasi-score on a 1-based inclusive window under the
// recursion-defined R path (the model with the error term dropped).
NoErrorFit fit_no_error(const FitData& data, int window_begin, int window_end, const AlgorithmConfig& algo);

// Location-shift profile estimator of beta given theta and an R path.
Eigen::VectorXd profile_beta(const Eigen::VectorXd& theta, const std::vector<double>& r_path, const FitData& data);

// Predicted R path under the given parameters with residual-corrected lags.
std::vector<double> update_r_path(const Params& params, const FitData& data, const AlgorithmConfig& algo);

struct ThetaUpdate {
    double phi0_star = 0.0;
    Eigen::VectorXd theta;
    double objective = 0.0;
    int newton_iterations = 0;
};

// Concave profile-likelihood update of (phi0*, theta) given the lag path.
ThetaUpdate update_theta(const std::vector<double>& r_path, const FitData& data, const AlgorithmConfig& algo,
                         int obj_begin, int obj_end);

FitState qsoeid_fit(const FitData& data, const AlgorithmConfig& algo);

struct DailyObservation {
    Date date;
    double cases = 0.0;
    Eigen::VectorXd covariates;
};

// One day-step extension of a converged state; composing these reproduces
// the batch forward fit exactly.
FitState online_update(FitState state, const DailyObservation& obs);

double estimate_dispersion(const FitState& state);

// Same data and diagnostics, different parameters: recomputes the lag and
// working paths (used to re-forecast under bootstrap replicate parameters).
FitState reparameterized(const FitState& state, const Params& params);

} // namespace qse
