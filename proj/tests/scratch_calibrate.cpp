// scratch calibration harness (not part of the suite)
#include <cstdio>
#include <algorithm>
#include "helpers.hpp"
#include "qse/errors.hpp"
using namespace qse;
using namespace qse::testing;

int main() {
    int extinct = 0, diverged = 0;
    double min_peak = 1e18, max_peak = 0, min_trough = 1e18;
    std::vector<double> th, b1, b2, ph;
    for (int i = 0; i < 30; ++i) {
        auto cfg = scenario1_config(1000 + i);
        try {
            auto sim = simulate_epidemic(cfg);
            if (sim.extinct) { extinct++; continue; }
            double peak = *std::max_element(sim.series.incidence.begin(), sim.series.incidence.end());
            double tail = sim.series.incidence.back();
            min_peak = std::min(min_peak, peak); max_peak = std::max(max_peak, peak);
            min_trough = std::min(min_trough, tail);
            auto data = fit_data_of(sim);
            AlgorithmConfig algo;
            auto st = qsoeid_fit(data, algo);
            th.push_back(st.params.theta(0));
            b1.push_back(st.params.beta(0));
            b2.push_back(st.params.beta(1));
            ph.push_back(st.params.phi0_star);
            double avg_it = 0; for (auto&h : st.history) avg_it += h.inner_iterations;
            if (i < 3) printf("rep %d: peak=%.0f tail=%.0f th=%.4f b1=%.5f b2=%.4f ph=%.4f iters/day=%.2f\n",
                   i, peak, tail, st.params.theta(0), st.params.beta(0), st.params.beta(1), st.params.phi0_star,
                   avg_it / st.history.size());
        } catch (const Error& e) { diverged++; printf("rep %d failed: %s\n", i, e.what()); }
    }
    printf("extinct=%d failed=%d peaks [%.0f, %.0f] min tail=%.0f\n", extinct, diverged, min_peak, max_peak, min_trough);
    if (!th.empty()) {
        printf("theta:  mean=%.4f sd=%.4f (true .7)\n", mean_of(th), sd_of(th));
        printf("beta1:  mean=%.5f sd=%.5f (true -.02)\n", mean_of(b1), sd_of(b1));
        printf("beta2:  mean=%.4f sd=%.4f (true -.125)\n", mean_of(b2), sd_of(b2));
        printf("phi0*:  mean=%.4f sd=%.4f (true .5+.005=.505)\n", mean_of(ph), sd_of(ph));
    }
    return 0;
}
