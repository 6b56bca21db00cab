#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qse {

// Calendar date (proleptic Gregorian), stored as days since 1970-01-01.
struct Date {
    std::int64_t days = 0;

    static Date from_ymd(int year, int month, int day);
    static Date parse(const std::string& iso); // "YYYY-MM-DD"
    std::string to_string() const;
    void to_ymd(int& year, int& month, int& day) const;

    Date operator+(std::int64_t n) const { return Date{days + n}; }
    std::int64_t operator-(Date other) const { return days - other.days; }
    auto operator<=>(const Date&) const = default;
};

// Discretized infectiousness weights omega_1..omega_eta; omega_0 is
// implicitly zero and the weights sum to one.
struct InfectiousnessProfile {
    std::vector<double> weights;
    int horizon = 0;
    std::string source;           // "explicit" or "gamma(shape,rate)"
    bool low_mass_warning = false; // pre-normalization mass < 0.5

    void validate() const;
};

InfectiousnessProfile make_profile(std::vector<double> raw_weights);
InfectiousnessProfile discretize_infectiousness(double shape, double rate, int horizon);

// Daily incidence with a seed mass before day 1. Incidence entries are reals
// because smoothing produces fractional counts.
struct EpidemicSeries {
    Date start_date;
    double seed_count = 0.0;                       // aggregate cases at t=0 (point seed)
    std::vector<double> incidence;                 // I_1..I_N
    std::vector<double> pre_history;               // optional, oldest first, ending at t=0
    std::optional<std::vector<double>> raw_incidence;
    std::string smoothing; // e.g. "ma4", empty if none

    int size() const { return static_cast<int>(incidence.size()); }
    void validate() const;
};

struct ColumnTransform {
    int ma_window = 1; // 1 = no smoothing
    int lag_delay = 0;
    double lag_fill = 0.0;
    bool lag_fill_first = true; // default fill: first observed value
};

// N x p covariate matrix plus preprocessing provenance.
struct CovariateFrame {
    std::vector<std::string> names;
    Eigen::MatrixXd values; // N rows, p cols
    std::vector<ColumnTransform> transforms;
    bool intercept_included = true; // X_t^T = (1, Z_t^T)

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }
    void validate(int expected_rows) const;
};

enum class LagFamily { LogLag, CenteredLogLag };
enum class DispersionMode { Fixed, Pearson };

struct ModelSpec {
    int ar_order = 1;                        // q
    LagFamily lag_family = LagFamily::LogLag;
    double variance_kappa = 1.0;             // g(mu) = mu^kappa
    DispersionMode dispersion_mode = DispersionMode::Pearson;

    void validate() const;
};

struct ForceOfInfectionPath {
    std::vector<double> values; // Lambda_1..Lambda_N
};

ForceOfInfectionPath force_of_infection(const EpidemicSeries& series, const InfectiousnessProfile& profile);

// Trailing moving average; edge entries average over the available prefix.
std::vector<double> moving_average(const std::vector<double>& series, int window);

struct LagResult {
    std::vector<double> values;
    bool all_fill = false; // delay >= length
};

LagResult lag_series(const std::vector<double>& series, int delay, double fill);

} // namespace qse
