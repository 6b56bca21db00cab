#include "qse/simulate.hpp"

#include <cmath>
#include <numeric>

#include "qse/errors.hpp"
#include "qse/rng.hpp"

namespace qse {

double error_mean_factor(const ErrorSpec& spec) {
    if (std::holds_alternative<DegenerateError>(spec)) return 1.0;
    if (const auto* g = std::get_if<GaussianError>(&spec)) return std::exp(0.5 * g->sigma * g->sigma);
    fail(ErrorCode::InvalidParameter, "E[e^eps] has no closed form for this error law");
}

void SimulationConfig::validate() const {
    if (days < 1) fail(ErrorCode::InvalidParameter, "simulation: days must be >= 1");
    if (!(seed_count >= 1.0)) fail(ErrorCode::InvalidParameter, "simulation: seed count must be >= 1");
    profile.validate();
    double theta_l1 = 0.0;
    for (double th : params.theta) theta_l1 += std::abs(th);
    if (!(theta_l1 < 1.0)) fail(ErrorCode::InvalidParameter, "simulation: ||theta||_1 must be < 1");
    if (params.beta.size() != covariates.size())
        fail(ErrorCode::InvalidParameter, "simulation: beta size must match covariate count");
    if (!std::isfinite(params.phi0)) fail(ErrorCode::InvalidParameter, "simulation: phi0 must be finite");
    if (const auto* nb = std::get_if<NegativeBinomialCounts>(&count_law); nb && !(nb->phi > 1.0))
        fail(ErrorCode::InvalidParameter, "simulation: negative-binomial dispersion must be > 1");
}

namespace {

std::vector<double> ar1_noise(int n, double rho, double sigma, std::mt19937_64& rng) {
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    if (sigma <= 0.0) return x;
    if (std::abs(rho) >= 1.0) fail(ErrorCode::InvalidParameter, "covariate AR(1): |rho| must be < 1");
    std::normal_distribution<double> z(0.0, 1.0);
    const double stat_sd = sigma / std::sqrt(1.0 - rho * rho);
    x[0] = stat_sd * z(rng);
    for (int t = 1; t < n; ++t) x[static_cast<std::size_t>(t)] = rho * x[static_cast<std::size_t>(t - 1)] + sigma * z(rng);
    return x;
}

std::vector<double> generate_column(const CovariateGen& gen, int days, std::mt19937_64& rng) {
    std::vector<double> col(static_cast<std::size_t>(days), 0.0);
    if (const auto* s = std::get_if<SeasonalCovariate>(&gen)) {
        auto noise = ar1_noise(days, s->ar_rho, s->ar_sigma, rng);
        for (int t = 0; t < days; ++t)
            col[static_cast<std::size_t>(t)] =
                s->mean + s->amplitude * std::sin(2.0 * M_PI * (static_cast<double>(t) + s->phase) / s->period) +
                noise[static_cast<std::size_t>(t)];
    } else if (const auto* r = std::get_if<RampCovariate>(&gen)) {
        if (r->ramp_end < r->ramp_start) fail(ErrorCode::InvalidParameter, "ramp covariate: ramp_end < ramp_start");
        auto noise = ar1_noise(days, r->ar_rho, r->ar_sigma, rng);
        for (int t = 0; t < days; ++t) {
            double level;
            if (t <= r->ramp_start) {
                level = r->start_level;
            } else if (t >= r->ramp_end) {
                level = r->end_level;
            } else {
                const double u = static_cast<double>(t - r->ramp_start) / static_cast<double>(r->ramp_end - r->ramp_start);
                level = r->start_level + (r->end_level - r->start_level) * 0.5 * (1.0 - std::cos(M_PI * u));
            }
            col[static_cast<std::size_t>(t)] = level + noise[static_cast<std::size_t>(t)];
        }
    } else if (const auto* u = std::get_if<UniformCovariate>(&gen)) {
        std::uniform_real_distribution<double> d(u->lo, u->hi);
        for (auto& v : col) v = d(rng);
    } else if (const auto* nrm = std::get_if<NormalCovariate>(&gen)) {
        std::normal_distribution<double> d(nrm->mean, nrm->sigma);
        for (auto& v : col) v = d(rng);
    } else if (const auto* c = std::get_if<ConstantCovariate>(&gen)) {
        for (auto& v : col) v = c->value;
    } else if (const auto* vals = std::get_if<ValuesCovariate>(&gen)) {
        if (static_cast<int>(vals->values.size()) < days)
            fail(ErrorCode::InvalidParameter, "values covariate: fewer values than simulated days");
        for (int t = 0; t < days; ++t) col[static_cast<std::size_t>(t)] = vals->values[static_cast<std::size_t>(t)];
    }
    return col;
}

double draw_error(const ErrorSpec& spec, std::mt19937_64& rng) {
    if (std::holds_alternative<DegenerateError>(spec)) return 0.0;
    if (const auto* g = std::get_if<GaussianError>(&spec)) {
        std::normal_distribution<double> d(0.0, g->sigma);
        return d(rng);
    }
    if (const auto* t = std::get_if<StudentTError>(&spec)) {
        std::student_t_distribution<double> d(t->df);
        return t->scale * d(rng);
    }
    return std::get<CustomIidError>(spec).draw(rng);
}

double draw_count(const CountLaw& law, double mean, std::mt19937_64& rng) {
    if (mean <= 0.0) return 0.0;
    if (std::holds_alternative<PoissonCounts>(law)) {
        std::poisson_distribution<long long> d(mean);
        return static_cast<double>(d(rng));
    }
    // Gamma-Poisson mixture: variance = phi * mean.
    const double phi = std::get<NegativeBinomialCounts>(law).phi;
    std::gamma_distribution<double> g(mean / (phi - 1.0), phi - 1.0);
    const double lambda = g(rng);
    if (lambda <= 0.0) return 0.0;
    std::poisson_distribution<long long> d(lambda);
    return static_cast<double>(d(rng));
}

} // namespace

CovariateFrame generate_covariates(const std::vector<CovariateSpec>& specs, int days, std::uint64_t rng_seed) {
    if (days < 1) fail(ErrorCode::InvalidParameter, "generate_covariates: days must be >= 1");
    CovariateFrame frame;
    frame.values.resize(days, static_cast<int>(specs.size()));
    for (std::size_t j = 0; j < specs.size(); ++j) {
        auto rng = make_stream(rng_seed, 1000 + j); // one stream per column
        auto col = generate_column(specs[j].gen, days, rng);
        for (int t = 0; t < days; ++t) frame.values(t, static_cast<int>(j)) = col[static_cast<std::size_t>(t)];
        frame.names.push_back(specs[j].name.empty() ? "z" + std::to_string(j + 1) : specs[j].name);
    }
    frame.transforms.assign(specs.size(), ColumnTransform{});
    return frame;
}

SimulatedEpidemic simulate_epidemic(const SimulationConfig& config) {
    config.validate();
    const int T = config.days;
    const int q = static_cast<int>(config.params.theta.size());
    const auto& theta = config.params.theta;
    const auto& beta = config.params.beta;

    SimulatedEpidemic out;
    out.covariates = generate_covariates(config.covariates, T, config.rng_seed);
    auto err_rng = make_stream(config.rng_seed, 1);
    auto count_rng = make_stream(config.rng_seed, 2);

    out.series.start_date = config.start_date;
    out.series.seed_count = config.seed_count;
    out.series.incidence.reserve(static_cast<std::size_t>(T));
    out.true_r_path.reserve(static_cast<std::size_t>(T));
    out.true_errors.reserve(static_cast<std::size_t>(T));

    // Stationary mean of the noise-free recursion at day-1 covariates.
    double theta_sum = std::accumulate(theta.begin(), theta.end(), 0.0);
    double z1_beta = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) z1_beta += out.covariates.values(0, static_cast<int>(j)) * beta[j];
    const double log_r_pre = (config.params.phi0 + z1_beta) / (1.0 - theta_sum);

    std::vector<double> log_r; // realized log R_1..log R_t
    log_r.reserve(static_cast<std::size_t>(T));

    for (int t = 1; t <= T; ++t) {
        double eta_lin = config.params.phi0;
        for (std::size_t j = 0; j < beta.size(); ++j)
            eta_lin += out.covariates.values(t - 1, static_cast<int>(j)) * beta[j];
        for (int i = 1; i <= q; ++i) {
            const int lag_day = t - i;
            eta_lin += theta[static_cast<std::size_t>(i - 1)] *
                       (lag_day >= 1 ? log_r[static_cast<std::size_t>(lag_day - 1)] : log_r_pre);
        }
        const double eps = draw_error(config.error_spec, err_rng);
        const double log_rt = eta_lin + eps;
        const double rt = std::exp(log_rt);

        // Incremental force of infection over the current history.
        double lambda = 0.0;
        const int smax = std::min(config.profile.horizon, t);
        for (int s = 1; s <= smax; ++s) {
            const int day = t - s;
            const double inc = day >= 1 ? out.series.incidence[static_cast<std::size_t>(day - 1)] : config.seed_count;
            lambda += inc * config.profile.weights[static_cast<std::size_t>(s - 1)];
        }
        const double mean = rt * lambda;
        if (mean > 1e12)
            fail(ErrorCode::Diverged, "simulated epidemic diverged at day " + std::to_string(t) +
                                          " (expected count " + std::to_string(mean) + ")");
        if (lambda == 0.0 && t < T) out.extinct = true;

        out.series.incidence.push_back(draw_count(config.count_law, mean, count_rng));
        out.true_r_path.push_back(rt);
        out.true_errors.push_back(eps);
        log_r.push_back(log_rt);
    }
    return out;
}

} // namespace qse
