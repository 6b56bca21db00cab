#include "qse/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qse/errors.hpp"
#include "qse/parallel.hpp"
#include "qse/rng.hpp"

namespace qse {

int BootstrapConfig::resolve_block_length(int n, int p, int q) const {
    if (block_length > 0) return block_length;
    int l = static_cast<int>(std::lround(6.7 * std::cbrt(static_cast<double>(n))));
    l = std::min(l, n / 4);
    l = std::max(l, p + q + 2);
    return l;
}

void BootstrapConfig::validate(int n, int p, int q) const {
    const int l = resolve_block_length(n, p, q);
    if (l < p + q + 2) fail(ErrorCode::InvalidParameter, "bootstrap: block length below estimability floor");
    if (n < l) fail(ErrorCode::InvalidParameter, "bootstrap: series shorter than the block length");
    if (replicates < 2) fail(ErrorCode::InvalidParameter, "bootstrap: need at least 2 replicates");
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidParameter, "bootstrap: alpha must lie in (0,1)");
}

namespace {

// Order-statistic quantile x_{ceil(s*a)} on sorted values.
double order_quantile(const std::vector<double>& sorted, double a) {
    const std::size_t s = sorted.size();
    std::size_t idx = static_cast<std::size_t>(std::ceil(a * static_cast<double>(s)));
    idx = std::clamp<std::size_t>(idx, 1, s);
    return sorted[idx - 1];
}

} // namespace

BootstrapResult block_bootstrap(const FitData& data, const AlgorithmConfig& algo, const BootstrapConfig& config,
                                std::size_t threads) {
    data.validate();
    algo.validate();
    const int n = data.size();
    const int p = data.covariates.cols();
    const int q = data.spec.ar_order;
    config.validate(n, p, q);
    const int l = config.resolve_block_length(n, p, q);
    const int tau0 = algo.resolve_tau0(q, p);
    if (n <= tau0) fail(ErrorCode::InvalidParameter, "bootstrap: series not longer than tau0");

    const int n_blocks = (n - tau0 + l - 1) / l;
    const int dim = 1 + q + p;
    const int s = config.replicates;

    struct RepOutcome {
        bool ok = false;
        Eigen::VectorXd params;
        std::vector<double> r_path;
        std::string reason;
    };
    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(s));

    parallel_for(static_cast<std::size_t>(s), threads, [&](std::size_t i) {
        auto rng = make_stream(config.rng_seed, i);
        std::uniform_int_distribution<int> block_end(l, n); // block covers [end-l+1, end]

        FitData pseudo = data;
        pseudo.series.raw_incidence.reset();
        // Original initialization window, then resampled blocks, truncated to n.
        int filled = tau0;
        for (int b = 0; b < n_blocks && filled < n; ++b) {
            const int end = block_end(rng);
            for (int off = 0; off < l && filled < n; ++off) {
                const int src = end - l + 1 + off; // 1-based source day
                pseudo.series.incidence[static_cast<std::size_t>(filled)] =
                    data.series.incidence[static_cast<std::size_t>(src - 1)];
                for (int j = 0; j < p; ++j)
                    pseudo.covariates.values(filled, j) = data.covariates.values(src - 1, j);
                ++filled;
            }
        }

        auto& out = outcomes[i];
        try {
            FitState fit = qsoeid_fit(pseudo, algo);
            out.params = fit.params.packed();
            out.r_path = fit.r_path;
            out.ok = true;
        } catch (const Error& e) {
            out.reason = e.what();
        }
    });

    BootstrapResult result;
    result.config = config;
    result.config.block_length = l;
    int ok_count = 0;
    for (const auto& o : outcomes) ok_count += o.ok ? 1 : 0;
    result.replicate_params.resize(ok_count, dim);
    result.replicate_r_paths.resize(ok_count, n);
    int row = 0;
    for (int i = 0; i < s; ++i) {
        const auto& o = outcomes[static_cast<std::size_t>(i)];
        if (!o.ok) {
            result.failures.push_back({i, o.reason});
            continue;
        }
        result.replicate_params.row(row) = o.params;
        for (int t = 0; t < n; ++t) result.replicate_r_paths(row, t) = o.r_path[static_cast<std::size_t>(t)];
        result.replicate_ids.push_back(i);
        ++row;
    }
    if (static_cast<int>(result.failures.size()) * 2 > s)
        fail(ErrorCode::DegenerateData, "bootstrap: more than half of the replicates failed to refit (" +
                                            std::to_string(result.failures.size()) + "/" + std::to_string(s) + ")");
    return result;
}

std::pair<double, double> confidence_interval(const BootstrapResult& result, const FitState& full_fit,
                                              int param_index, double alpha, CiMethod method) {
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidParameter, "confidence_interval: alpha must be in (0,1)");
    const int s = result.successes();
    if (s < 2) fail(ErrorCode::DegenerateData, "confidence_interval: fewer than 2 successful replicates");
    if (param_index < 0 || param_index >= result.replicate_params.cols())
        fail(ErrorCode::InvalidParameter, "confidence_interval: parameter index out of range");

    std::vector<double> vals(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i) vals[static_cast<std::size_t>(i)] = result.replicate_params(i, param_index);
    std::sort(vals.begin(), vals.end());
    const double lo_q = order_quantile(vals, alpha / 2.0);
    const double hi_q = order_quantile(vals, 1.0 - alpha / 2.0);

    if (method == CiMethod::Percentile) return {lo_q, hi_q};
    const double center = full_fit.params.packed()(param_index);
    return {2.0 * center - hi_q, 2.0 * center - lo_q};
}

std::vector<std::pair<double, double>> r_band(const BootstrapResult& result, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidParameter, "r_band: alpha must be in (0,1)");
    const int s = result.successes();
    if (s < 2) fail(ErrorCode::DegenerateData, "r_band: fewer than 2 successful replicates");
    const int n = static_cast<int>(result.replicate_r_paths.cols());
    std::vector<std::pair<double, double>> band(static_cast<std::size_t>(n));
    std::vector<double> vals(static_cast<std::size_t>(s));
    for (int t = 0; t < n; ++t) {
        for (int i = 0; i < s; ++i) vals[static_cast<std::size_t>(i)] = result.replicate_r_paths(i, t);
        std::sort(vals.begin(), vals.end());
        band[static_cast<std::size_t>(t)] = {order_quantile(vals, alpha / 2.0),
                                             order_quantile(vals, 1.0 - alpha / 2.0)};
    }
    return band;
}

} // namespace qse
