#include "afnet/selection_stats.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "afnet/tensor.hpp"

namespace afnet {

double SelectionStats::trend_at(double b) const {
    double v = 0, p = 1;
    for (double c : trend) {
        v += c * p;
        p *= b;
    }
    return v;
}

std::vector<double> cubic_fit(const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    AFNET_CHECK(n >= 1, "cubic_fit: empty series");
    Eigen::MatrixXd a(n, 4);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
        double p = 1;
        for (int j = 0; j < 4; ++j) {
            a(i, j) = p;
            p *= i;
        }
        b(i) = y[i];
    }
    // Complete orthogonal decomposition gives the minimum-norm least-squares
    // solution, which interpolates exactly when n <= 4.
    Eigen::VectorXd c = a.completeOrthogonalDecomposition().solve(b);
    return {c(0), c(1), c(2), c(3)};
}

SelectionStats selection_stats(const std::vector<std::vector<std::vector<double>>>& hard,
                               const std::vector<std::vector<int>>& salient) {
    AFNET_CHECK(!hard.empty(), "selection_stats: no traces");
    const size_t samples = hard.size();
    const size_t blocks = hard[0].size();
    AFNET_CHECK(blocks >= 1, "selection_stats: no blocks");
    const size_t frames = hard[0][0].size();

    SelectionStats st;
    st.rt_mean.assign(blocks, 0.0);
    st.rt_std.assign(blocks, 0.0);
    st.freq.assign(blocks, std::vector<double>(frames, 0.0));

    for (size_t b = 0; b < blocks; ++b) {
        double sum = 0, sum2 = 0;
        for (size_t s = 0; s < samples; ++s) {
            AFNET_CHECK(hard[s].size() == blocks && hard[s][b].size() == frames,
                        "selection_stats: ragged trace at sample ", s);
            double r = 0;
            for (size_t t = 0; t < frames; ++t) {
                r += hard[s][b][t];
                st.freq[b][t] += hard[s][b][t];
            }
            r /= static_cast<double>(frames);
            sum += r;
            sum2 += r * r;
        }
        st.rt_mean[b] = sum / static_cast<double>(samples);
        const double var = sum2 / static_cast<double>(samples) - st.rt_mean[b] * st.rt_mean[b];
        st.rt_std[b] = std::sqrt(std::max(var, 0.0));
        for (size_t t = 0; t < frames; ++t) st.freq[b][t] /= static_cast<double>(samples);
    }

    if (!salient.empty()) {
        AFNET_CHECK(salient.size() == samples, "selection_stats: ", salient.size(),
                    " ground-truth entries for ", samples, " samples");
        st.has_ground_truth = true;
        long sel = 0, hit = 0, planted = 0, recalled = 0;
        for (size_t s = 0; s < samples; ++s)
            for (size_t b = 0; b < blocks; ++b)
                for (size_t t = 0; t < frames; ++t) {
                    const bool is_sal =
                        std::find(salient[s].begin(), salient[s].end(), static_cast<int>(t)) !=
                        salient[s].end();
                    const bool is_sel = hard[s][b][t] > 0.5;
                    sel += is_sel;
                    hit += is_sel && is_sal;
                    planted += is_sal;
                    recalled += is_sel && is_sal;
                }
        st.precision = sel > 0 ? static_cast<double>(hit) / sel : 0.0;
        st.recall = planted > 0 ? static_cast<double>(recalled) / planted : 0.0;
    }

    st.trend = cubic_fit(st.rt_mean);
    if (blocks >= 2) {
        const double last = static_cast<double>(blocks - 1);
        st.avg_slope = (st.trend_at(last) - st.trend_at(0.0)) / last;
    }
    return st;
}

std::vector<SelectionRecord> selection_records(
    const std::vector<std::vector<std::vector<double>>>& hard) {
    std::vector<SelectionRecord> out;
    for (size_t s = 0; s < hard.size(); ++s)
        for (size_t b = 0; b < hard[s].size(); ++b)
            for (size_t t = 0; t < hard[s][b].size(); ++t)
                out.push_back({static_cast<int>(s), static_cast<int>(b), static_cast<int>(t),
                               hard[s][b][t] > 0.5 ? 1 : 0});
    return out;
}

}  // namespace afnet
