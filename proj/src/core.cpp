#include "qse/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/special_functions/gamma.hpp>

#include "qse/errors.hpp"

namespace qse {

// ---- Date (civil calendar <-> days since epoch, Hinnant's algorithms) ----

static std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 + static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

static void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

Date Date::from_ymd(int year, int month, int day) {
    if (month < 1 || month > 12 || day < 1 || day > 31)
        fail(ErrorCode::Format, "invalid calendar date");
    Date dt{days_from_civil(year, month, day)};
    int y, m, d;
    dt.to_ymd(y, m, d);
    if (y != year || m != month || d != day) fail(ErrorCode::Format, "invalid calendar date");
    return dt;
}

Date Date::parse(const std::string& iso) {
    int y = 0, m = 0, d = 0;
    char extra = 0;
    if (std::sscanf(iso.c_str(), "%d-%d-%d%c", &y, &m, &d, &extra) != 3)
        fail(ErrorCode::Format, "expected ISO-8601 date (YYYY-MM-DD), got '" + iso + "'");
    return from_ymd(y, m, d);
}

std::string Date::to_string() const {
    int y, m, d;
    to_ymd(y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

void Date::to_ymd(int& year, int& month, int& day) const { civil_from_days(days, year, month, day); }

// ---- InfectiousnessProfile ----

void InfectiousnessProfile::validate() const {
    if (horizon < 1 || static_cast<int>(weights.size()) != horizon)
        fail(ErrorCode::InvalidParameter, "infectiousness profile: horizon must be >= 1 and match weights");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) fail(ErrorCode::InvalidParameter, "infectiousness profile: negative or non-finite weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        fail(ErrorCode::InvalidParameter, "infectiousness profile: weights must sum to 1");
}

InfectiousnessProfile make_profile(std::vector<double> raw_weights) {
    if (raw_weights.empty()) fail(ErrorCode::InvalidParameter, "profile weights must be non-empty");
    double sum = 0.0;
    for (double w : raw_weights) {
        if (!std::isfinite(w) || w < 0.0) fail(ErrorCode::InvalidParameter, "profile weights must be nonnegative");
        sum += w;
    }
    if (sum <= 0.0) fail(ErrorCode::InvalidParameter, "profile weights must have positive mass");
    for (double& w : raw_weights) w /= sum;
    InfectiousnessProfile p;
    p.weights = std::move(raw_weights);
    p.horizon = static_cast<int>(p.weights.size());
    p.source = "explicit";
    p.validate();
    return p;
}

InfectiousnessProfile discretize_infectiousness(double shape, double rate, int horizon) {
    if (!std::isfinite(shape) || !std::isfinite(rate) || shape <= 0.0 || rate <= 0.0)
        fail(ErrorCode::InvalidParameter, "gamma discretization: shape and rate must be positive finite");
    if (horizon < 1) fail(ErrorCode::InvalidParameter, "gamma discretization: horizon must be >= 1");

    // Unit-interval masses of the gamma density, then renormalize over [0, eta].
    std::vector<double> w(static_cast<std::size_t>(horizon));
    double prev_cdf = 0.0;
    for (int s = 1; s <= horizon; ++s) {
        const double cdf = boost::math::gamma_p(shape, rate * static_cast<double>(s));
        w[static_cast<std::size_t>(s - 1)] = cdf - prev_cdf;
        prev_cdf = cdf;
    }
    const bool low_mass = prev_cdf < 0.5;

    InfectiousnessProfile p = make_profile(std::move(w));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "gamma(%g,%g)", shape, rate);
    p.source = buf;
    p.low_mass_warning = low_mass;
    return p;
}

// ---- EpidemicSeries ----

void EpidemicSeries::validate() const {
    if (incidence.empty()) fail(ErrorCode::InvalidParameter, "epidemic series must have at least one day");
    if (!(seed_count >= 0.0)) fail(ErrorCode::InvalidParameter, "seed count must be nonnegative");
    for (double v : incidence)
        if (!std::isfinite(v) || v < 0.0) fail(ErrorCode::InvalidParameter, "incidence must be nonnegative");
    for (double v : pre_history)
        if (!std::isfinite(v) || v < 0.0) fail(ErrorCode::InvalidParameter, "pre-history incidence must be nonnegative");
}

void CovariateFrame::validate(int expected_rows) const {
    if (static_cast<int>(names.size()) != cols())
        fail(ErrorCode::InvalidParameter, "covariate frame: name count must match columns");
    if (rows() != expected_rows)
        fail(ErrorCode::InvalidParameter, "covariate frame: row count must match incidence length");
    if (!values.allFinite()) fail(ErrorCode::InvalidParameter, "covariate frame: non-finite entry");
}

void ModelSpec::validate() const {
    if (ar_order < 0) fail(ErrorCode::InvalidParameter, "model spec: AR order must be >= 0");
    if (variance_kappa != 1.0)
        fail(ErrorCode::InvalidParameter, "model spec: only g(mu)=mu (kappa=1) is implemented");
}

// ---- Force of infection ----

ForceOfInfectionPath force_of_infection(const EpidemicSeries& series, const InfectiousnessProfile& profile) {
    series.validate();
    profile.validate();
    const int n = series.size();
    const int eta = profile.horizon;
    const auto& omega = profile.weights;
    // History at and before t=0: pre_history (oldest first) with the seed mass
    // at t=0 when no explicit history is given.
    std::vector<double> history = series.pre_history;
    if (history.empty()) history.push_back(series.seed_count);
    const int hist_len = static_cast<int>(history.size());

    ForceOfInfectionPath out;
    out.values.assign(static_cast<std::size_t>(n), 0.0);
    for (int t = 1; t <= n; ++t) {
        double acc = 0.0;
        const int smax = std::min(eta, t - 1 + hist_len);
        for (int s = 1; s <= smax; ++s) {
            const int day = t - s; // calendar index of the infecting cohort
            const double inc = day >= 1 ? series.incidence[static_cast<std::size_t>(day - 1)]
                                        : history[static_cast<std::size_t>(hist_len - 1 + day)];
            acc += inc * omega[static_cast<std::size_t>(s - 1)];
        }
        out.values[static_cast<std::size_t>(t - 1)] = acc;
    }
    return out;
}

// ---- Series transforms ----

std::vector<double> moving_average(const std::vector<double>& series, int window) {
    if (window < 1) fail(ErrorCode::InvalidParameter, "moving average: window must be >= 1");
    std::vector<double> out(series.size());
    double running = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        running += series[t];
        if (t >= static_cast<std::size_t>(window)) running -= series[t - static_cast<std::size_t>(window)];
        const double len = static_cast<double>(std::min<std::size_t>(t + 1, static_cast<std::size_t>(window)));
        out[t] = running / len;
    }
    return out;
}

LagResult lag_series(const std::vector<double>& series, int delay, double fill) {
    if (delay < 0) fail(ErrorCode::InvalidParameter, "lag: delay must be >= 0");
    LagResult res;
    res.values.assign(series.size(), fill);
    if (delay >= static_cast<int>(series.size())) {
        res.all_fill = true;
        return res;
    }
    for (std::size_t t = static_cast<std::size_t>(delay); t < series.size(); ++t)
        res.values[t] = series[t - static_cast<std::size_t>(delay)];
    return res;
}

} // namespace qse
