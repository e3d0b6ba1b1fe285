#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "afnet/model.hpp"
#include "afnet/training.hpp"

namespace afnet {

// Single-file checkpoint: a line-oriented text manifest (version, scalar
// type, training counters, then one line per tensor with name/shape/byte
// offset) terminated by "end", followed by a raw little-endian blob the
// offsets index into.  Loading refuses version, scalar, or shape mismatches.

inline constexpr const char* kCheckpointMagic = "afnet-checkpoint v1";

struct TrainState {
    int64_t step = 0;
    int epochs = 0;
    uint64_t seed = 0;
    uint64_t rng_counter = 0;  // informational: draws are re-derived from (seed, tag, step)
};

namespace detail {

template <class S>
using Bits = std::conditional_t<sizeof(S) == 4, uint32_t, uint64_t>;

template <class S>
void append_le(std::string& blob, const S* v, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        Bits<S> b = std::bit_cast<Bits<S>>(v[i]);
        for (size_t byte = 0; byte < sizeof(S); ++byte)
            blob.push_back(static_cast<char>((b >> (8 * byte)) & 0xff));
    }
}

template <class S>
void extract_le(const std::string& blob, size_t offset, S* v, size_t n) {
    AFNET_CHECK(offset + n * sizeof(S) <= blob.size(), "checkpoint: blob truncated");
    for (size_t i = 0; i < n; ++i) {
        Bits<S> b = 0;
        for (size_t byte = 0; byte < sizeof(S); ++byte)
            b |= static_cast<Bits<S>>(static_cast<unsigned char>(
                     blob[offset + i * sizeof(S) + byte]))
                 << (8 * byte);
        v[i] = std::bit_cast<S>(b);
    }
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, Model<S>& model, const SGD<S>* opt,
                     const TrainState& ts) {
    ParamMap<S> pm = model.state();
    std::ostringstream man;
    std::string blob;
    man << kCheckpointMagic << "\n";
    man << "scalar " << ScalarName<S>::value << "\n";
    man << "step " << ts.step << "\n";
    man << "epochs " << ts.epochs << "\n";
    man << "seed " << ts.seed << "\n";
    man << "counter " << ts.rng_counter << "\n";

    man << "params " << pm.params.size() << "\n";
    for (auto& [name, t] : pm.params) {
        man << name << " " << ScalarName<S>::value << " " << t.rank();
        for (int d = 0; d < t.rank(); ++d) man << " " << t.dim(d);
        man << " " << blob.size() << "\n";
        detail::append_le<S>(blob, t.ptr(), t.data().size());
    }
    man << "buffers " << pm.buffers.size() << "\n";
    for (auto& [name, v] : pm.buffers) {
        man << name << " " << ScalarName<S>::value << " " << v->size() << " " << blob.size()
            << "\n";
        detail::append_le<S>(blob, v->data(), v->size());
    }
    const size_t opt_n = opt ? opt->velocity.size() : 0;
    man << "opt " << opt_n << "\n";
    if (opt)
        for (const auto& [name, v] : opt->velocity) {
            man << name << " " << ScalarName<S>::value << " " << v.size() << " " << blob.size()
                << "\n";
            detail::append_le<S>(blob, v.data(), v.size());
        }
    man << "end\n";

    std::ofstream f(path, std::ios::binary);
    AFNET_CHECK(f.good(), "checkpoint: cannot open '", path, "' for writing");
    f << man.str();
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    AFNET_CHECK(f.good(), "checkpoint: write to '", path, "' failed");
}

template <class S>
TrainState load_checkpoint(const std::string& path, Model<S>& model, SGD<S>* opt) {
    std::ifstream f(path, std::ios::binary);
    AFNET_CHECK(f.good(), "checkpoint: cannot open '", path, "'");
    std::string line;
    AFNET_CHECK(std::getline(f, line) && line == kCheckpointMagic,
                "checkpoint: '", path, "' has unsupported format/version (got '", line, "')");

    auto expect_kv = [&](const char* key) -> std::string {
        AFNET_CHECK(std::getline(f, line), "checkpoint: truncated manifest at '", key, "'");
        std::istringstream is(line);
        std::string k, v;
        is >> k >> v;
        AFNET_CHECK(k == key, "checkpoint: expected '", key, "', got '", k, "'");
        return v;
    };
    const std::string scalar = expect_kv("scalar");
    AFNET_CHECK(scalar == ScalarName<S>::value, "checkpoint: scalar type ", scalar,
                " does not match model scalar ", ScalarName<S>::value);
    TrainState ts;
    ts.step = std::stoll(expect_kv("step"));
    ts.epochs = std::stoi(expect_kv("epochs"));
    ts.seed = std::stoull(expect_kv("seed"));
    ts.rng_counter = std::stoull(expect_kv("counter"));

    struct Entry {
        std::string name;
        Shape shape;  // params only
        size_t len = 0, offset = 0;
    };
    auto read_section = [&](const char* key, bool with_shape) {
        const size_t n = std::stoul(expect_kv(key));
        std::vector<Entry> out(n);
        for (size_t i = 0; i < n; ++i) {
            AFNET_CHECK(std::getline(f, line), "checkpoint: truncated ", key, " section");
            std::istringstream is(line);
            Entry& e = out[i];
            std::string dtype;
            is >> e.name >> dtype;
            AFNET_CHECK(dtype == ScalarName<S>::value, "checkpoint: entry '", e.name,
                        "' has dtype ", dtype);
            if (with_shape) {
                int rank = 0;
                is >> rank;
                e.shape.resize(static_cast<size_t>(rank));
                e.len = 1;
                for (int d = 0; d < rank; ++d) {
                    is >> e.shape[d];
                    e.len *= static_cast<size_t>(e.shape[d]);
                }
            } else {
                is >> e.len;
            }
            is >> e.offset;
            AFNET_CHECK(!is.fail(), "checkpoint: malformed entry line '", line, "'");
        }
        return out;
    };
    const std::vector<Entry> params = read_section("params", true);
    const std::vector<Entry> buffers = read_section("buffers", false);
    const std::vector<Entry> opt_entries = read_section("opt", false);
    AFNET_CHECK(std::getline(f, line) && line == "end", "checkpoint: missing end marker");

    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    ParamMap<S> pm = model.state();
    AFNET_CHECK(params.size() == pm.params.size(), "checkpoint: has ", params.size(),
                " params, model expects ", pm.params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [name, t] = pm.params[i];
        AFNET_CHECK(params[i].name == name, "checkpoint: param ", i, " is '", params[i].name,
                    "', model expects '", name, "'");
        AFNET_CHECK(params[i].shape == t.shape(), "checkpoint: param '", name, "' shape ",
                    shape_str(params[i].shape), " != model ", shape_str(t.shape()));
        detail::extract_le<S>(blob, params[i].offset, t.ptr(), t.data().size());
    }
    AFNET_CHECK(buffers.size() == pm.buffers.size(), "checkpoint: has ", buffers.size(),
                " buffers, model expects ", pm.buffers.size());
    for (size_t i = 0; i < buffers.size(); ++i) {
        auto& [name, v] = pm.buffers[i];
        AFNET_CHECK(buffers[i].name == name && buffers[i].len == v->size(),
                    "checkpoint: buffer mismatch at '", buffers[i].name, "'");
        detail::extract_le<S>(blob, buffers[i].offset, v->data(), v->size());
    }
    if (opt) {
        opt->velocity.clear();
        for (const auto& e : opt_entries) {
            std::vector<S> v(e.len);
            detail::extract_le<S>(blob, e.offset, v.data(), e.len);
            opt->velocity.emplace(e.name, std::move(v));
        }
    }
    return ts;
}

}  // namespace afnet
