#pragma once

#include <string>
#include <vector>

namespace afnet {

// One exported selection decision: was `frame` selected at AF block `block`
// for sample `sample`.
struct SelectionRecord {
    int sample = 0;
    int block = 0;
    int frame = 0;
    int selected = 0;
};

struct SelectionStats {
    std::vector<double> rt_mean, rt_std;     // per global AF block
    std::vector<std::vector<double>> freq;   // [block][frame] inclusion frequency
    double precision = 0, recall = 0;        // vs planted salient frames
    bool has_ground_truth = false;
    std::vector<double> trend;  // cubic fit c0 + c1 b + c2 b^2 + c3 b^3 of rt_mean
    double avg_slope = 0;       // (fit(last) - fit(0)) / last; 0 when single block

    double trend_at(double b) const;
};

// hard[s][b][t] in {0,1}: sample s, global AF block b, frame t.
// salient[s]: planted frame indices (empty vector list = no ground truth).
SelectionStats selection_stats(const std::vector<std::vector<std::vector<double>>>& hard,
                               const std::vector<std::vector<int>>& salient);

std::vector<SelectionRecord> selection_records(
    const std::vector<std::vector<std::vector<double>>>& hard);

// Least-squares cubic over x = 0..n-1 (minimum-norm solution, interpolating
// when n <= 4); returns {c0, c1, c2, c3}.
std::vector<double> cubic_fit(const std::vector<double>& y);

}  // namespace afnet
