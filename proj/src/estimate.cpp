#include "qse/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qse/errors.hpp"

namespace qse {

void AlgorithmConfig::validate() const {
    if (!(outer_tol > 0.0) || !(inner_tol > 0.0))
        fail(ErrorCode::InvalidParameter, "algorithm: tolerances must be positive");
    if (outer_max_iter < 1 || inner_max_iter < 1)
        fail(ErrorCode::InvalidParameter, "algorithm: iteration limits must be >= 1");
    if (!(theta_bound > 0.0 && theta_bound < 1.0))
        fail(ErrorCode::InvalidParameter, "algorithm: theta bound must lie in (0,1)");
    if (!(residual_clip > 0.0)) fail(ErrorCode::InvalidParameter, "algorithm: residual clip must be positive");
}

int AlgorithmConfig::resolve_tau0(int q, int p) const {
    if (tau0 > 0) return tau0;
    return std::max(14, q + p + 3);
}

void FitData::validate() const {
    series.validate();
    profile.validate();
    spec.validate();
    covariates.validate(series.size());
}

Eigen::VectorXd Params::packed() const {
    Eigen::VectorXd v(dim());
    v(0) = phi0_star;
    v.segment(1, theta.size()) = theta;
    v.segment(1 + theta.size(), beta.size()) = beta;
    return v;
}

Params Params::unpack(const Eigen::VectorXd& v, int q, int p) {
    Params out;
    out.phi0_star = v(0);
    out.theta = v.segment(1, q);
    out.beta = v.segment(1 + q, p);
    return out;
}

std::optional<double> FitState::phi0_unabsorbed() const {
    if (!known_error_sigma) return std::nullopt;
    const double s = *known_error_sigma;
    return params.phi0_star - 0.5 * s * s;
}

namespace {

constexpr double kEtaClamp = 500.0; // keeps exp() finite on wild trial steps

double clamp_eta(double eta) { return std::min(eta, kEtaClamp); }

double l1_norm(const Eigen::VectorXd& v) { return v.lpNorm<1>(); }

// Radial projection onto the closed l1 ball of the given radius.
bool project_theta(Eigen::VectorXd& theta, double bound) {
    const double n = l1_norm(theta);
    if (n <= bound) return false;
    theta *= bound / n;
    return true;
}

double zdot(const CovariateFrame& frame, int t /*1-based*/, const Eigen::VectorXd& beta) {
    double acc = 0.0;
    for (int j = 0; j < beta.size(); ++j) acc += frame.values(t - 1, j) * beta(j);
    return acc;
}

struct PathWorkspace {
    std::vector<double> work_log_r; // predicted log R_t
    std::vector<double> lag_log_r;  // residual-corrected log estimates feeding lags
};

// Builds the predicted path and the residual-corrected lag path for t=1..upto.
// Lag terms use corrected past values; the day-t prediction itself never sees
// day-t data, so the path is one-step-ahead by construction.
void compute_path(const Params& params, const FitData& data, const AlgorithmConfig& algo,
                  const std::vector<double>& lambda, int upto, PathWorkspace& ws) {
    const int q = static_cast<int>(params.theta.size());
    const bool centered = data.spec.lag_family == LagFamily::CenteredLogLag;
    const double theta_sum = params.theta.sum();

    ws.work_log_r.assign(static_cast<std::size_t>(upto), 0.0);
    ws.lag_log_r.assign(static_cast<std::size_t>(upto), 0.0);

    // Pre-sample lag values: stationary mean of the noise-free recursion at
    // day-1 covariates (zero for the centered family, whose lag terms are
    // already mean-centered).
    const double pre_plain = (params.phi0_star + zdot(data.covariates, 1, params.beta)) / (1.0 - theta_sum);

    for (int t = 1; t <= upto; ++t) {
        const double xb = params.phi0_star + zdot(data.covariates, t, params.beta);
        double eta = xb;
        for (int i = 1; i <= q; ++i) {
            const int lag_day = t - i;
            double fi;
            if (centered) {
                fi = lag_day >= 1 ? ws.lag_log_r[static_cast<std::size_t>(lag_day - 1)] -
                                        (params.phi0_star + zdot(data.covariates, lag_day, params.beta))
                                  : 0.0;
            } else {
                fi = lag_day >= 1 ? ws.lag_log_r[static_cast<std::size_t>(lag_day - 1)] : pre_plain;
            }
            eta += params.theta(i - 1) * fi;
        }
        eta = clamp_eta(eta);
        ws.work_log_r[static_cast<std::size_t>(t - 1)] = eta;

        // Working residual on the log scale, clipped; zero-Lambda days carry
        // no information about R_t.
        double corrected = eta;
        const double lam = lambda[static_cast<std::size_t>(t - 1)];
        if (lam > 0.0) {
            const double mu = std::exp(eta) * lam;
            double w = (data.series.incidence[static_cast<std::size_t>(t - 1)] - mu) / mu;
            w = std::clamp(w, -algo.residual_clip, algo.residual_clip);
            corrected = eta + w;
        }
        ws.lag_log_r[static_cast<std::size_t>(t - 1)] = corrected;
    }
}

std::vector<double> compute_lambda(const FitData& data) {
    return force_of_infection(data.series, data.profile).values;
}

double count_scale(const FitData& data, int lo, int hi) {
    double s = 0.0;
    for (int t = lo; t <= hi; ++t) s += data.series.incidence[static_cast<std::size_t>(t - 1)];
    return std::max(1.0, s);
}

// ---- profile pieces: beta as an affine function of theta ----

struct ProfilePieces {
    Eigen::VectorXd b0;  // p
    Eigen::MatrixXd bs;  // p x q, column s-1 = coefficient of theta_s
    int rows_begin = 0;
    int rows_end = 0;
};

void check_gram(const Eigen::MatrixXd& gram, const std::string& what) {
    if (gram.rows() == 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double max_ev = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, max_ev))
        fail(ErrorCode::NonIdentifiable, what + ": singular covariate Gram matrix (collinear columns)");
}

// Regression pieces of the location-shift step over rows [lo, hi]:
// b0 = G^-1 sum (Z-Zbar) y_t,  bs = G^-1 sum (Z-Zbar) y_{t-s}.
ProfilePieces profile_pieces(const std::vector<double>& y, const FitData& data, int q, int lo, int hi) {
    const int p = data.covariates.cols();
    ProfilePieces out;
    out.rows_begin = lo;
    out.rows_end = hi;
    out.b0 = Eigen::VectorXd::Zero(p);
    out.bs = Eigen::MatrixXd::Zero(p, q);
    if (p == 0) return out;
    const int n = hi - lo + 1;
    if (n < p + 1) fail(ErrorCode::DegenerateData, "profile regression: too few rows for beta");

    Eigen::VectorXd zbar = Eigen::VectorXd::Zero(p);
    for (int t = lo; t <= hi; ++t)
        for (int j = 0; j < p; ++j) zbar(j) += data.covariates.values(t - 1, j);
    zbar /= static_cast<double>(n);

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs0 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd rhss = Eigen::MatrixXd::Zero(p, q);
    Eigen::VectorXd zc(p);
    for (int t = lo; t <= hi; ++t) {
        for (int j = 0; j < p; ++j) zc(j) = data.covariates.values(t - 1, j) - zbar(j);
        gram.noalias() += zc * zc.transpose();
        rhs0.noalias() += zc * y[static_cast<std::size_t>(t - 1)];
        for (int s = 1; s <= q; ++s) rhss.col(s - 1).noalias() += zc * y[static_cast<std::size_t>(t - s - 1)];
    }
    check_gram(gram, "profile_beta");
    auto ldlt = gram.ldlt();
    out.b0 = ldlt.solve(rhs0);
    for (int s = 1; s <= q; ++s) out.bs.col(s - 1) = ldlt.solve(rhss.col(s - 1));
    return out;
}

// ---- concave profile-likelihood Newton over (phi0*, theta) ----

struct ProfileObjective {
    // eta_t = phi0 + offset_t + sum_s theta_s * c(t,s)
    std::vector<double> offset; // indexed by row
    Eigen::MatrixXd c;          // rows x q
    std::vector<double> counts;
    std::vector<double> lam;
    double scale = 1.0;

    int rows() const { return static_cast<int>(counts.size()); }

    double value(double phi0, const Eigen::VectorXd& theta) const {
        double obj = 0.0;
        for (int r = 0; r < rows(); ++r) {
            double eta = phi0 + offset[static_cast<std::size_t>(r)];
            for (int s = 0; s < theta.size(); ++s) eta += theta(s) * c(r, s);
            eta = clamp_eta(eta);
            obj += counts[static_cast<std::size_t>(r)] * eta - std::exp(eta) * lam[static_cast<std::size_t>(r)];
        }
        return obj;
    }

    void grad_hess(double phi0, const Eigen::VectorXd& theta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
        const int q = static_cast<int>(theta.size());
        grad.setZero(1 + q);
        hess.setZero(1 + q, 1 + q);
        Eigen::VectorXd u(1 + q);
        for (int r = 0; r < rows(); ++r) {
            double eta = phi0 + offset[static_cast<std::size_t>(r)];
            u(0) = 1.0;
            for (int s = 0; s < q; ++s) {
                eta += theta(s) * c(r, s);
                u(s + 1) = c(r, s);
            }
            eta = clamp_eta(eta);
            const double mu = std::exp(eta) * lam[static_cast<std::size_t>(r)];
            grad.noalias() += (counts[static_cast<std::size_t>(r)] - mu) * u;
            hess.noalias() -= mu * u * u.transpose();
        }
    }
};

// Builds the objective for the plain log-lag family given profile pieces,
// or for the centered family given fixed beta (reparameterized intercept).
ProfileObjective build_objective(const std::vector<double>& y, const FitData& data,
                                 const std::vector<double>& lambda, const ProfilePieces* pieces,
                                 const Eigen::VectorXd* fixed_beta, int lo, int hi) {
    const int q = data.spec.ar_order;
    const bool centered = fixed_beta != nullptr;
    ProfileObjective obj;
    int usable = 0;
    for (int t = lo; t <= hi; ++t)
        if (lambda[static_cast<std::size_t>(t - 1)] > 0.0) ++usable;
    if (usable == 0) fail(ErrorCode::DegenerateData, "profile objective: force of infection is zero everywhere");
    obj.offset.reserve(static_cast<std::size_t>(usable));
    obj.counts.reserve(static_cast<std::size_t>(usable));
    obj.lam.reserve(static_cast<std::size_t>(usable));
    obj.c.resize(usable, q);
    int r = 0;
    for (int t = lo; t <= hi; ++t) {
        const double lamt = lambda[static_cast<std::size_t>(t - 1)];
        if (!(lamt > 0.0)) continue;
        double off;
        if (centered) {
            off = zdot(data.covariates, t, *fixed_beta);
            for (int s = 1; s <= q; ++s)
                obj.c(r, s - 1) = y[static_cast<std::size_t>(t - s - 1)] - zdot(data.covariates, t - s, *fixed_beta);
        } else {
            off = pieces->b0.size() > 0 ? zdot(data.covariates, t, pieces->b0) : 0.0;
            for (int s = 1; s <= q; ++s) {
                double cts = y[static_cast<std::size_t>(t - s - 1)];
                if (pieces->bs.rows() > 0) cts -= zdot(data.covariates, t, pieces->bs.col(s - 1));
                obj.c(r, s - 1) = cts;
            }
        }
        obj.offset.push_back(off);
        obj.counts.push_back(data.series.incidence[static_cast<std::size_t>(t - 1)]);
        obj.lam.push_back(lamt);
        ++r;
    }
    obj.scale = count_scale(data, lo, hi);
    return obj;
}

struct NewtonResult {
    double phi0 = 0.0;
    Eigen::VectorXd theta;
    double objective = 0.0;
    int iterations = 0;
    bool projected = false;
};

NewtonResult newton_concave(const ProfileObjective& obj, const AlgorithmConfig& algo, double phi0_start,
                            Eigen::VectorXd theta_start) {
    const int q = static_cast<int>(theta_start.size());
    NewtonResult res;
    res.phi0 = phi0_start;
    res.theta = std::move(theta_start);
    res.projected = project_theta(res.theta, algo.theta_bound);

    double fval = obj.value(res.phi0, res.theta);
    Eigen::VectorXd grad(1 + q);
    Eigen::MatrixXd hess(1 + q, 1 + q);
    for (int it = 1; it <= algo.inner_max_iter; ++it) {
        res.iterations = it;
        obj.grad_hess(res.phi0, res.theta, grad, hess);
        if (grad.cwiseAbs().maxCoeff() <= algo.inner_tol * obj.scale) break;

        Eigen::MatrixXd neg_h = -hess;
        const double ridge = 1e-12 * std::max(1.0, neg_h.trace() / static_cast<double>(1 + q));
        neg_h.diagonal().array() += ridge;
        Eigen::VectorXd step = neg_h.ldlt().solve(grad);
        if (!step.allFinite()) fail(ErrorCode::NonIdentifiable, "profile update: singular Hessian");

        // Step-halving ascent with l1-ball projection of theta.
        double t_scale = 1.0;
        bool accepted = false;
        for (int h = 0; h < 40; ++h) {
            double phi0_try = res.phi0 + t_scale * step(0);
            Eigen::VectorXd theta_try = res.theta + t_scale * step.tail(q);
            const bool proj = project_theta(theta_try, algo.theta_bound);
            const double f_try = obj.value(phi0_try, theta_try);
            if (std::isfinite(f_try) && f_try >= fval - 1e-12 * std::abs(fval)) {
                if (proj) res.projected = true;
                res.phi0 = phi0_try;
                res.theta = std::move(theta_try);
                accepted = f_try > fval || step.cwiseAbs().maxCoeff() * t_scale > 1e-14;
                fval = f_try;
                break;
            }
            t_scale *= 0.5;
        }
        if (!accepted) break; // no ascent left at this resolution
        if (step.cwiseAbs().maxCoeff() * t_scale < 1e-13 * (1.0 + std::abs(res.phi0))) break;
    }

    // Theorem-2 sanity: the profile Hessian must be negative semidefinite.
    obj.grad_hess(res.phi0, res.theta, grad, hess);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
    const double max_ev = es.eigenvalues().maxCoeff();
    const double min_ev = es.eigenvalues().minCoeff();
    if (max_ev > 1e-6 * (1.0 + std::abs(min_ev)))
        fail(ErrorCode::Internal, "profile update: non-concave Hessian (implementation or data fault)");

    res.objective = fval;
    return res;
}

} // namespace

// ---- public operations ----

Eigen::VectorXd quasi_score(const Params& params, const FitData& data, const std::vector<double>& r_path) {
    data.validate();
    const int n = data.size();
    const int q = static_cast<int>(params.theta.size());
    const int p = static_cast<int>(params.beta.size());
    if (static_cast<int>(r_path.size()) < n)
        fail(ErrorCode::InvalidParameter, "quasi_score: r_path shorter than the series");
    const bool centered = data.spec.lag_family == LagFamily::CenteredLogLag;
    auto lambda = compute_lambda(data);

    std::vector<double> y(r_path.size());
    for (std::size_t i = 0; i < r_path.size(); ++i) {
        if (!(r_path[i] > 0.0)) fail(ErrorCode::InvalidParameter, "quasi_score: r_path values must be positive");
        y[i] = std::log(r_path[i]);
    }

    Eigen::VectorXd score = Eigen::VectorXd::Zero(1 + q + p);
    Eigen::VectorXd x(1 + q + p);
    bool any = false;
    for (int t = q + 1; t <= n; ++t) {
        const double lam = lambda[static_cast<std::size_t>(t - 1)];
        if (!(lam > 0.0)) continue; // score summand undefined at nu=0
        any = true;
        double eta = params.phi0_star + zdot(data.covariates, t, params.beta);
        const double theta_sum = params.theta.sum();
        x(0) = centered ? 1.0 - theta_sum : 1.0;
        for (int s = 1; s <= q; ++s) {
            double fi = y[static_cast<std::size_t>(t - s - 1)];
            if (centered) fi -= params.phi0_star + zdot(data.covariates, t - s, params.beta);
            eta += params.theta(s - 1) * fi;
            x(s) = fi;
        }
        for (int j = 0; j < p; ++j) {
            double xj = data.covariates.values(t - 1, j);
            if (centered)
                for (int s = 1; s <= q; ++s) xj -= params.theta(s - 1) * data.covariates.values(t - s - 1, j);
            x(1 + q + j) = xj;
        }
        const double mu = std::exp(clamp_eta(eta)) * lam;
        score.noalias() += (data.series.incidence[static_cast<std::size_t>(t - 1)] - mu) * x;
    }
    if (!any) fail(ErrorCode::DegenerateData, "quasi_score: force of infection is zero at every usable day");
    return score;
}

namespace {

// Deterministic recursion path of the no-error model on a window.
std::vector<double> recursion_path(const Params& params, const FitData& data, int a, int b) {
    const int q = static_cast<int>(params.theta.size());
    const bool centered = data.spec.lag_family == LagFamily::CenteredLogLag;
    const double pre = (params.phi0_star + zdot(data.covariates, a, params.beta)) / (1.0 - params.theta.sum());
    std::vector<double> log_r(static_cast<std::size_t>(b - a + 1), 0.0);
    for (int t = a; t <= b; ++t) {
        double eta = params.phi0_star + zdot(data.covariates, t, params.beta);
        for (int i = 1; i <= q; ++i) {
            const int lag_day = t - i;
            double fi;
            if (centered) {
                fi = lag_day >= a ? log_r[static_cast<std::size_t>(lag_day - a)] -
                                        (params.phi0_star + zdot(data.covariates, lag_day, params.beta))
                                  : 0.0;
            } else {
                fi = lag_day >= a ? log_r[static_cast<std::size_t>(lag_day - a)] : pre;
            }
            eta += params.theta(i - 1) * fi;
        }
        log_r[static_cast<std::size_t>(t - a)] = clamp_eta(eta);
    }
    return log_r;
}

// Plug-in score and Fisher information on the window given the current path.
void window_score(const Params& params, const FitData& data, const std::vector<double>& lambda,
                  const std::vector<double>& log_r, int a, int b, Eigen::VectorXd& score, Eigen::MatrixXd& fisher) {
    const int q = static_cast<int>(params.theta.size());
    const int p = static_cast<int>(params.beta.size());
    const bool centered = data.spec.lag_family == LagFamily::CenteredLogLag;
    const int d = 1 + q + p;
    score.setZero(d);
    fisher.setZero(d, d);
    Eigen::VectorXd x(d);
    for (int t = a + q; t <= b; ++t) {
        const double lam = lambda[static_cast<std::size_t>(t - 1)];
        if (!(lam > 0.0)) continue;
        double eta = params.phi0_star + zdot(data.covariates, t, params.beta);
        x(0) = centered ? 1.0 - params.theta.sum() : 1.0;
        for (int s = 1; s <= q; ++s) {
            double fi = log_r[static_cast<std::size_t>(t - s - a)];
            if (centered) fi -= params.phi0_star + zdot(data.covariates, t - s, params.beta);
            eta += params.theta(s - 1) * fi;
            x(s) = fi;
        }
        for (int j = 0; j < p; ++j) {
            double xj = data.covariates.values(t - 1, j);
            if (centered)
                for (int s = 1; s <= q; ++s) xj -= params.theta(s - 1) * data.covariates.values(t - s - 1, j);
            x(1 + q + j) = xj;
        }
        const double mu = std::exp(clamp_eta(eta)) * lam;
        const double resid = data.series.incidence[static_cast<std::size_t>(t - 1)] - mu;
        score.noalias() += resid * x;
        fisher.noalias() += mu * x * x.transpose();
    }
}

// Concave Poisson GLM with a frozen design: maximize sum I*eta - exp(eta)*lam
// over gamma with eta = x' gamma; theta coordinates kept in the l1 ball.
Eigen::VectorXd glm_solve(const Eigen::MatrixXd& design, const std::vector<double>& counts,
                          const std::vector<double>& lam, Eigen::VectorXd gamma, int q_lo, int q_hi,
                          const AlgorithmConfig& algo, double scale, const std::string& what) {
    const int d = static_cast<int>(design.cols());
    const int rows = static_cast<int>(design.rows());
    auto objective = [&](const Eigen::VectorXd& g) {
        double obj = 0.0;
        for (int r = 0; r < rows; ++r) {
            const double eta = clamp_eta(design.row(r).dot(g));
            obj += counts[static_cast<std::size_t>(r)] * eta - std::exp(eta) * lam[static_cast<std::size_t>(r)];
        }
        return obj;
    };
    auto project = [&](Eigen::VectorXd& g) {
        if (q_hi < q_lo) return;
        Eigen::VectorXd th = g.segment(q_lo, q_hi - q_lo + 1);
        project_theta(th, algo.theta_bound);
        g.segment(q_lo, q_hi - q_lo + 1) = th;
    };
    project(gamma);
    double fval = objective(gamma);
    Eigen::VectorXd grad(d);
    Eigen::MatrixXd hess(d, d);
    for (int it = 0; it < algo.inner_max_iter; ++it) {
        grad.setZero();
        hess.setZero();
        for (int r = 0; r < rows; ++r) {
            const double mu = std::exp(clamp_eta(design.row(r).dot(gamma))) * lam[static_cast<std::size_t>(r)];
            grad.noalias() += (counts[static_cast<std::size_t>(r)] - mu) * design.row(r).transpose();
            hess.noalias() += mu * design.row(r).transpose() * design.row(r);
        }
        if (grad.cwiseAbs().maxCoeff() <= 0.5 * algo.inner_tol * scale) break;
        check_gram(hess, what);
        hess.diagonal().array() += 1e-10 * std::max(1.0, hess.trace() / d);
        Eigen::VectorXd step = hess.ldlt().solve(grad);
        if (!step.allFinite()) fail(ErrorCode::NonIdentifiable, what + ": singular information matrix");
        double t_scale = 1.0;
        for (int h = 0; h < 40; ++h) {
            Eigen::VectorXd trial = gamma + t_scale * step;
            project(trial);
            const double f_try = objective(trial);
            if (std::isfinite(f_try) && f_try >= fval - 1e-12 * std::abs(fval)) {
                gamma = trial;
                fval = f_try;
                break;
            }
            t_scale *= 0.5;
        }
        if (step.cwiseAbs().maxCoeff() * t_scale < 1e-13 * (1.0 + gamma.cwiseAbs().maxCoeff())) break;
    }
    return gamma;
}

} // namespace

NoErrorFit fit_no_error(const FitData& data, int window_begin, int window_end, const AlgorithmConfig& algo) {
    data.validate();
    algo.validate();
    const int q = data.spec.ar_order;
    const int p = data.covariates.cols();
    const int a = window_begin, b = window_end;
    if (a < 1 || b > data.size() || b < a) fail(ErrorCode::InvalidParameter, "fit_no_error: bad window");
    if (b - a + 1 < 2 + q + p)
        fail(ErrorCode::InvalidParameter, "fit_no_error: window shorter than parameter count + 1");
    auto lambda = compute_lambda(data);

    double sum_i = 0.0, sum_l = 0.0;
    for (int t = a; t <= b; ++t) {
        sum_i += data.series.incidence[static_cast<std::size_t>(t - 1)];
        sum_l += lambda[static_cast<std::size_t>(t - 1)];
    }
    if (!(sum_l > 0.0))
        fail(ErrorCode::DegenerateData, "fit_no_error: force of infection is zero on the whole window");

    Params params;
    params.phi0_star = std::log((sum_i + 0.5) / (sum_l + 0.5));
    params.theta = Eigen::VectorXd::Zero(q);
    params.beta = Eigen::VectorXd::Zero(p);

    // With theta = 0 and beta = 0 the lag regressors are constant and exactly
    // collinear with the intercept, so stage the solve: fit the AR-free model
    // first and start the joint Newton from its (phi0, beta).
    if (q > 0 && p > 0) {
        FitData reduced = data;
        reduced.spec.ar_order = 0;
        auto pre = fit_no_error(reduced, a, b, algo);
        params.phi0_star = pre.params.phi0_star;
        params.beta = pre.params.beta;
    }

    const double scale = count_scale(data, a, b);
    Eigen::VectorXd score;
    Eigen::MatrixXd fisher;
    auto log_r = recursion_path(params, data, a, b);
    window_score(params, data, lambda, log_r, a, b, score, fisher);
    double merit = score.squaredNorm();

    const std::string window_name = "[" + std::to_string(a) + "," + std::to_string(b) + "]";
    bool projected = false;
    for (int it = 0; it < algo.inner_max_iter; ++it) {
        if (score.cwiseAbs().maxCoeff() <= algo.inner_tol * scale) break;
        check_gram(fisher, "fit_no_error: information matrix on window " + window_name);
        Eigen::MatrixXd reg = fisher;
        reg.diagonal().array() += 1e-10 * std::max(1.0, fisher.trace() / fisher.rows());
        Eigen::VectorXd step = reg.ldlt().solve(score);
        if (!step.allFinite())
            fail(ErrorCode::NonIdentifiable, "fit_no_error: singular Jacobian on window " + window_name);

        double t_scale = 1.0;
        bool accepted = false;
        Params trial;
        for (int h = 0; h < 40; ++h) {
            trial = Params::unpack(params.packed() + t_scale * step, q, p);
            projected = project_theta(trial.theta, algo.theta_bound) || projected;
            auto trial_path = recursion_path(trial, data, a, b);
            Eigen::VectorXd trial_score;
            Eigen::MatrixXd trial_fisher;
            window_score(trial, data, lambda, trial_path, a, b, trial_score, trial_fisher);
            const double trial_merit = trial_score.squaredNorm();
            if (std::isfinite(trial_merit) && trial_merit <= merit * (1.0 - 1e-4 * t_scale) + 1e-300) {
                params = trial;
                log_r = std::move(trial_path);
                score = std::move(trial_score);
                fisher = std::move(trial_fisher);
                merit = trial_merit;
                accepted = true;
                break;
            }
            t_scale *= 0.5;
        }
        if (!accepted) break; // stalled; tolerance check below decides
    }
    if (score.cwiseAbs().maxCoeff() > std::sqrt(algo.inner_tol) * scale)
        fail(ErrorCode::NonConvergence,
             "fit_no_error: quasi-score did not converge on window " + window_name);

    NoErrorFit out;
    out.params = params;
    out.r_path.resize(log_r.size());
    for (std::size_t i = 0; i < log_r.size(); ++i) out.r_path[i] = std::exp(log_r[i]);
    out.score_norm = score.cwiseAbs().maxCoeff();
    out.score_scale = scale;
    out.theta_projected = projected;
    return out;
}

Eigen::VectorXd profile_beta(const Eigen::VectorXd& theta, const std::vector<double>& r_path, const FitData& data) {
    data.validate();
    const int q = static_cast<int>(theta.size());
    const int p = data.covariates.cols();
    const int hi = static_cast<int>(r_path.size());
    if (hi < q + 1) fail(ErrorCode::InvalidParameter, "profile_beta: r_path shorter than q+1");
    std::vector<double> y(r_path.size());
    for (std::size_t i = 0; i < r_path.size(); ++i) {
        if (!(r_path[i] > 0.0)) fail(ErrorCode::InvalidParameter, "profile_beta: r_path values must be positive");
        y[i] = std::log(r_path[i]);
    }
    if (p == 0) return Eigen::VectorXd();

    if (data.spec.lag_family == LagFamily::CenteredLogLag) {
        // Regress (y_t - sum theta y_{t-s}) on centered transformed covariates.
        const int lo = q + 1;
        const int n = hi - lo + 1;
        Eigen::MatrixXd zt(n, p);
        Eigen::VectorXd resp(n);
        for (int t = lo; t <= hi; ++t) {
            double r = y[static_cast<std::size_t>(t - 1)];
            for (int s = 1; s <= q; ++s) r -= theta(s - 1) * y[static_cast<std::size_t>(t - s - 1)];
            resp(t - lo) = r;
            for (int j = 0; j < p; ++j) {
                double v = data.covariates.values(t - 1, j);
                for (int s = 1; s <= q; ++s) v -= theta(s - 1) * data.covariates.values(t - s - 1, j);
                zt(t - lo, j) = v;
            }
        }
        Eigen::RowVectorXd mean = zt.colwise().mean();
        zt.rowwise() -= mean;
        resp.array() -= resp.mean();
        Eigen::MatrixXd gram = zt.transpose() * zt;
        check_gram(gram, "profile_beta");
        return gram.ldlt().solve(zt.transpose() * resp);
    }

    auto pieces = profile_pieces(y, data, q, q + 1, hi);
    return pieces.b0 - pieces.bs * theta;
}

std::vector<double> update_r_path(const Params& params, const FitData& data, const AlgorithmConfig& algo) {
    data.validate();
    auto lambda = compute_lambda(data);
    PathWorkspace ws;
    compute_path(params, data, algo, lambda, data.size(), ws);
    std::vector<double> out(ws.work_log_r.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(ws.work_log_r[i]);
    return out;
}

ThetaUpdate update_theta(const std::vector<double>& r_path, const FitData& data, const AlgorithmConfig& algo,
                         int obj_begin, int obj_end) {
    data.validate();
    algo.validate();
    const int q = data.spec.ar_order;
    if (obj_begin <= q || obj_end > data.size() || obj_end < obj_begin)
        fail(ErrorCode::InvalidParameter, "update_theta: bad objective range");
    if (static_cast<int>(r_path.size()) < obj_end - 1)
        fail(ErrorCode::InvalidParameter, "update_theta: r_path too short for requested range");
    auto lambda = compute_lambda(data);
    std::vector<double> y(r_path.size());
    for (std::size_t i = 0; i < r_path.size(); ++i) {
        if (!(r_path[i] > 0.0)) fail(ErrorCode::InvalidParameter, "update_theta: r_path values must be positive");
        y[i] = std::log(r_path[i]);
    }

    ProfileObjective obj;
    if (data.spec.lag_family == LagFamily::CenteredLogLag) {
        Eigen::VectorXd beta = profile_beta(Eigen::VectorXd::Zero(q), r_path, data);
        obj = build_objective(y, data, lambda, nullptr, &beta, obj_begin, obj_end);
    } else {
        auto pieces = profile_pieces(y, data, q, q + 1, std::max(q + 2, obj_end - 1));
        obj = build_objective(y, data, lambda, &pieces, nullptr, obj_begin, obj_end);
    }

    double sum_i = 0.0, sum_l = 0.0;
    for (std::size_t r = 0; r < obj.counts.size(); ++r) {
        sum_i += obj.counts[r];
        sum_l += obj.lam[r];
    }
    auto res = newton_concave(obj, algo, std::log((sum_i + 0.5) / (sum_l + 0.5)), Eigen::VectorXd::Zero(q));

    ThetaUpdate out;
    out.theta = res.theta;
    out.objective = res.objective;
    out.newton_iterations = res.iterations;
    if (data.spec.lag_family == LagFamily::CenteredLogLag)
        out.phi0_star = res.phi0 / (1.0 - res.theta.sum());
    else
        out.phi0_star = res.phi0;
    return out;
}

namespace {

// Pearson dispersion when requested and estimable, otherwise 1.
double refresh_dispersion(const FitState& st) {
    if (st.data.spec.dispersion_mode != DispersionMode::Pearson) return 1.0;
    const int dof_floor = 1 + st.data.spec.ar_order + st.data.covariates.cols();
    int n_eff = 0;
    for (int t = st.tau0 + 1; t <= st.k; ++t)
        if (st.lambda[static_cast<std::size_t>(t - 1)] > 0.0) ++n_eff;
    if (n_eff <= dof_floor) return 1.0;
    return estimate_dispersion(st);
}

// One assimilation day: alternate the profile step and the concave update
// until the parameters settle, then refresh the path.
void assimilate_day(FitState& st, int k) {
    const FitData& data = st.data;
    const int q = data.spec.ar_order;
    const int p = data.covariates.cols();
    const bool centered = data.spec.lag_family == LagFamily::CenteredLogLag;
    const Params prev = st.params;
    PathWorkspace ws;

    double delta = std::numeric_limits<double>::infinity();
    int iters = 0;
    double objective = 0.0;
    while (iters < st.algo.outer_max_iter) {
        ++iters;
        compute_path(st.params, data, st.algo, st.lambda, k, ws);
        Params next = st.params;
        if (centered) {
            Eigen::VectorXd beta_hold = st.params.beta;
            auto obj = build_objective(ws.lag_log_r, data, st.lambda, nullptr, &beta_hold, st.tau0 + 1, k);
            auto res = newton_concave(obj, st.algo, st.params.phi0_star * (1.0 - st.params.theta.sum()),
                                      st.params.theta);
            st.theta_projected = st.theta_projected || res.projected;
            next.theta = res.theta;
            next.phi0_star = res.phi0 / (1.0 - res.theta.sum());
            objective = res.objective;
            if (p > 0) {
                std::vector<double> rp(ws.lag_log_r.size());
                for (std::size_t i = 0; i < rp.size(); ++i) rp[i] = std::exp(ws.lag_log_r[i]);
                next.beta = profile_beta(next.theta, rp, data);
            }
        } else {
            auto pieces = profile_pieces(ws.lag_log_r, data, q, q + 1, k - 1);
            auto obj = build_objective(ws.lag_log_r, data, st.lambda, &pieces, nullptr, st.tau0 + 1, k);
            auto res = newton_concave(obj, st.algo, st.params.phi0_star, st.params.theta);
            st.theta_projected = st.theta_projected || res.projected;
            next.phi0_star = res.phi0;
            next.theta = res.theta;
            next.beta = pieces.b0 - pieces.bs * res.theta;
            objective = res.objective;
        }

        delta = std::abs(next.phi0_star - st.params.phi0_star);
        if (q > 0) delta = std::max(delta, (next.theta - st.params.theta).cwiseAbs().maxCoeff());
        if (p > 0) delta = std::max(delta, (next.beta - st.params.beta).cwiseAbs().maxCoeff());
        st.params = next;
        if (delta < st.algo.outer_tol) break;
    }
    if (!(delta < st.algo.outer_tol))
        fail(ErrorCode::NonConvergence, "qsoeid: outer loop did not converge at day " + std::to_string(k) +
                                            " (last step " + std::to_string(delta) + ")");

    compute_path(st.params, data, st.algo, st.lambda, k, ws);
    st.lag_log_r = ws.lag_log_r;
    st.work_log_r = ws.work_log_r;
    st.k = k;

    DayDiagnostics diag;
    diag.day = k;
    diag.inner_iterations = iters;
    diag.theta_step = q > 0 ? (st.params.theta - prev.theta).cwiseAbs().maxCoeff() : 0.0;
    diag.phi0_step = std::abs(st.params.phi0_star - prev.phi0_star);
    diag.objective = objective;
    st.history.push_back(diag);

    if (st.mode == FitMode::Forward)
        st.r_path.push_back(std::exp(st.work_log_r[static_cast<std::size_t>(k - 1)]));
}

} // namespace

FitState qsoeid_fit(const FitData& data, const AlgorithmConfig& algo) {
    data.validate();
    algo.validate();
    const int q = data.spec.ar_order;
    const int p = data.covariates.cols();
    const int n = data.size();
    const int tau0 = algo.resolve_tau0(q, p);
    if (n <= tau0)
        fail(ErrorCode::InvalidParameter,
             "qsoeid: need more than tau0=" + std::to_string(tau0) + " days, got " + std::to_string(n));

    FitState st;
    st.data = data;
    st.algo = algo;
    st.mode = algo.mode;
    st.tau0 = tau0;
    st.lambda = compute_lambda(data);

    auto init = fit_no_error(data, 1, tau0, algo);
    st.params = init.params;
    st.theta_projected = init.theta_projected;

    PathWorkspace ws;
    compute_path(st.params, data, algo, st.lambda, tau0, ws);
    st.lag_log_r = ws.lag_log_r;
    st.work_log_r = ws.work_log_r;
    st.k = tau0;
    st.r_path.resize(static_cast<std::size_t>(tau0));
    for (int t = 1; t <= tau0; ++t)
        st.r_path[static_cast<std::size_t>(t - 1)] = std::exp(ws.work_log_r[static_cast<std::size_t>(t - 1)]);

    for (int k = tau0 + 1; k <= n; ++k) assimilate_day(st, k);

    if (st.mode == FitMode::Backward) {
        st.r_path.resize(static_cast<std::size_t>(n));
        for (int t = 1; t <= n; ++t)
            st.r_path[static_cast<std::size_t>(t - 1)] = std::exp(st.work_log_r[static_cast<std::size_t>(t - 1)]);
    }

    st.dispersion = refresh_dispersion(st);
    return st;
}

FitState online_update(FitState state, const DailyObservation& obs) {
    const int k = state.k;
    const Date expected = state.data.series.start_date + k;
    if (obs.date != expected)
        fail(ErrorCode::Sequencing, "online_update: expected day " + expected.to_string() + ", got " +
                                        obs.date.to_string());
    if (obs.covariates.size() != state.data.covariates.cols())
        fail(ErrorCode::InvalidParameter, "online_update: covariate dimension mismatch");
    if (!(obs.cases >= 0.0) || !std::isfinite(obs.cases))
        fail(ErrorCode::InvalidParameter, "online_update: cases must be nonnegative");

    state.data.series.incidence.push_back(obs.cases);
    const int p = state.data.covariates.cols();
    state.data.covariates.values.conservativeResize(k + 1, p);
    for (int j = 0; j < p; ++j) state.data.covariates.values(k, j) = obs.covariates(j);

    // Extend Lambda with the same arithmetic force_of_infection uses.
    auto lam_full = compute_lambda(state.data);
    state.lambda.push_back(lam_full[static_cast<std::size_t>(k)]);

    assimilate_day(state, k + 1);
    if (state.mode == FitMode::Backward) {
        state.r_path.resize(static_cast<std::size_t>(k + 1));
        for (int t = 1; t <= k + 1; ++t)
            state.r_path[static_cast<std::size_t>(t - 1)] = std::exp(state.work_log_r[static_cast<std::size_t>(t - 1)]);
    }
    state.dispersion = refresh_dispersion(state);
    return state;
}

FitState reparameterized(const FitState& state, const Params& params) {
    FitState out = state;
    out.params = params;
    PathWorkspace ws;
    compute_path(out.params, out.data, out.algo, out.lambda, out.k, ws);
    out.lag_log_r = ws.lag_log_r;
    out.work_log_r = ws.work_log_r;
    for (int t = 1; t <= out.k; ++t)
        out.r_path[static_cast<std::size_t>(t - 1)] = std::exp(ws.work_log_r[static_cast<std::size_t>(t - 1)]);
    return out;
}

double estimate_dispersion(const FitState& state) {
    const int q = state.data.spec.ar_order;
    const int p = state.data.covariates.cols();
    double rss = 0.0;
    int n_eff = 0;
    for (int t = state.tau0 + 1; t <= state.k; ++t) {
        const double lam = state.lambda[static_cast<std::size_t>(t - 1)];
        if (!(lam > 0.0)) continue;
        const double mu = std::exp(state.work_log_r[static_cast<std::size_t>(t - 1)]) * lam;
        const double r = state.data.series.incidence[static_cast<std::size_t>(t - 1)] - mu;
        rss += r * r / mu;
        ++n_eff;
    }
    const int dof = n_eff - (1 + q + p);
    if (dof <= 0) fail(ErrorCode::DegenerateData, "dispersion: not enough usable days");
    return rss / static_cast<double>(dof);
}

} // namespace qse
