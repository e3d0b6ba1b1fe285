#include "afnet/csv.hpp"

#include <charconv>
#include <fstream>

namespace afnet {

namespace {

template <class T>
std::string to_chars_str(T v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    AFNET_CHECK(ec == std::errc(), "csv: to_chars failed");
    return std::string(buf, p);
}

}  // namespace

std::string csv_num(double v) { return to_chars_str(v); }
std::string csv_num(int64_t v) { return to_chars_str(v); }
std::string csv_num(uint64_t v) { return to_chars_str(v); }

std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ",";
        out += fields[i];
    }
    out += "\n";
    return out;
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows, int af_blocks) {
    std::vector<std::string> head = {"epoch", "split", "accuracy", "ce", "ratio_penalty"};
    for (int b = 0; b < af_blocks; ++b) head.push_back(cat("rt_block_", b));
    head.push_back("tau");
    head.push_back("precision_salient");
    std::string out = csv_row(head);
    for (const auto& m : rows) {
        AFNET_CHECK(static_cast<int>(m.rt_blocks.size()) == af_blocks, "metrics csv: row has ",
                    m.rt_blocks.size(), " block ratios, expected ", af_blocks);
        std::vector<std::string> f = {csv_num(m.epoch), m.split, csv_num(m.accuracy),
                                      csv_num(m.ce), csv_num(m.ratio_penalty)};
        for (double r : m.rt_blocks) f.push_back(csv_num(r));
        f.push_back(csv_num(m.tau));
        f.push_back(csv_num(m.precision_salient));
        out += csv_row(f);
    }
    return out;
}

std::string selection_csv(const std::vector<SelectionRecord>& records) {
    std::string out = csv_row({"sample_id", "block", "frame", "selected"});
    for (const auto& r : records)
        out += csv_row({csv_num(r.sample), csv_num(r.block), csv_num(r.frame),
                        csv_num(r.selected)});
    return out;
}

std::string cost_csv(const CostReport& report) {
    std::string out = csv_row({"block", "branch", "macs"});
    for (const auto& it : report.items)
        out += csv_row({csv_num(it.block), it.branch, csv_num(it.macs)});
    return out;
}

std::string stats_csv(const SelectionStats& stats) {
    std::string out = csv_row({"block", "rt_mean", "rt_std"});
    for (size_t b = 0; b < stats.rt_mean.size(); ++b)
        out += csv_row({csv_num(static_cast<int64_t>(b)), csv_num(stats.rt_mean[b]),
                        csv_num(stats.rt_std[b])});
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    AFNET_CHECK(f.good(), "cannot open '", path, "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    AFNET_CHECK(f.good(), "write to '", path, "' failed");
}

}  // namespace afnet
