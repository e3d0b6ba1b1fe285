#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afnet/cost_model.hpp"
#include "afnet/selection_stats.hpp"
#include "afnet/training.hpp"

namespace afnet {

// Locale-independent formatting (std::to_chars): '.' decimal point, no
// grouping, shortest round-trip form, so repeated runs emit identical bytes.
std::string csv_num(double v);
std::string csv_num(int64_t v);
std::string csv_num(uint64_t v);
inline std::string csv_num(int v) { return csv_num(static_cast<int64_t>(v)); }

std::string csv_row(const std::vector<std::string>& fields);

// metrics.csv: epoch,split,accuracy,ce,ratio_penalty,rt_block_0..N,tau,precision_salient
std::string metrics_csv(const std::vector<EpochMetrics>& rows, int af_blocks);

// selection.csv: sample_id,block,frame,selected
std::string selection_csv(const std::vector<SelectionRecord>& records);

// cost.csv: block,branch,macs (rows sum exactly to the full-cost total)
std::string cost_csv(const CostReport& report);

// stats.csv: block,rt_mean,rt_std
std::string stats_csv(const SelectionStats& stats);

void write_file(const std::string& path, const std::string& content);

}  // namespace afnet
