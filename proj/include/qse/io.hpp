#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qse/bench.hpp"
#include "qse/core.hpp"
#include "qse/estimate.hpp"
#include "qse/forecast.hpp"
#include "qse/simulate.hpp"
#include "qse/uncertainty.hpp"

namespace qse {

inline constexpr const char* kFormatVersion = "1";

struct TransformOptions {
    int ma_window = 1;
    int lag_delay = 0;
    std::optional<double> lag_fill; // default: first observed value
};

struct IngestOptions {
    int cases_ma_window = 1;
    TransformOptions covariate_default;
    std::map<std::string, TransformOptions> per_column;
    double seed_threshold = 0.0; // aggregate rows before the first day with cases >= threshold
    int seed_days = 0;           // alternative: first n days into the seed
    double seed_count = 0.0;     // explicit seed mass added on top of aggregated rows
};

struct Dataset {
    EpidemicSeries series;
    CovariateFrame covariates;
    InfectiousnessProfile profile;
    struct Provenance {
        std::string input_path;
        std::vector<std::string> transform_log;
        std::string format_version = kFormatVersion;
    } provenance;

    FitData fit_data(const ModelSpec& spec) const;
};

Dataset ingest_csv(const std::string& path, const IngestOptions& options, const InfectiousnessProfile& profile);

void write_dataset_csv(const std::string& path, const EpidemicSeries& series, const CovariateFrame& covariates);

// ---- JSON configuration document ----

struct ScenarioDocument {
    std::string name;
    int horizon = 0;
    int draws = 0;
    // per covariate: constant value or per-day values
    std::map<std::string, std::vector<double>> covariates;
};

struct ConfigDocument {
    ModelSpec model;
    AlgorithmConfig algorithm;
    double gamma_shape = 2.5;
    double gamma_rate = 0.255;
    int profile_horizon = 21;
    std::optional<std::vector<double>> profile_weights;
    IngestOptions ingest;
    BootstrapConfig bootstrap;
    std::vector<ScenarioDocument> scenarios;
    UtilityWeights utility;
    // study section
    std::string study_type = "bias"; // or "coverage"
    StudyConfig study;
    std::vector<int> study_block_lengths{30, 45, 60};
    std::vector<double> study_alphas{0.05, 0.10, 0.20};
    int study_bootstrap_replicates = 200;
    std::optional<double> known_error_sigma;

    nlohmann::json raw; // resolved echo

    InfectiousnessProfile make_infectiousness_profile() const;
};

ConfigDocument parse_config(const nlohmann::json& doc);
ConfigDocument load_config(const std::string& path);

// ---- reports ----

nlohmann::json fit_state_to_json(const FitState& state);
FitState fit_state_from_json(const nlohmann::json& j, const Dataset& dataset);

nlohmann::json fit_report(const FitState& state, const nlohmann::json& config_echo);
nlohmann::json bootstrap_report(const BootstrapResult& result, const FitState& full_fit,
                                const nlohmann::json& config_echo);
nlohmann::json forecast_report(const std::vector<ScenarioScore>& scores, const nlohmann::json& config_echo);
nlohmann::json simulation_report(const SimulatedEpidemic& sim, const SimulationConfig& config,
                                 const nlohmann::json& config_echo);
nlohmann::json bias_study_report(const StudyReport& report, const StudyConfig& config,
                                 const nlohmann::json& config_echo);
nlohmann::json coverage_study_report(const CoverageReport& report, const nlohmann::json& config_echo);

void write_text_file(const std::string& path, const std::string& content);

std::string fit_csv(const FitState& state);
std::string bootstrap_csv(const BootstrapResult& result);
std::string r_band_csv(const FitState& state, const std::vector<std::pair<double, double>>& band);
std::string forecast_csv(const std::vector<ScenarioScore>& scores, Date last_data_date);
std::string bias_study_csv(const StudyReport& report);
std::string coverage_study_csv(const CoverageReport& report);

// Stable shortest-round-trip formatting used by every CSV writer.
std::string format_double(double v);

} // namespace qse
