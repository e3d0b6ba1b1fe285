#pragma once

#include <cstdint>

namespace afnet {

// Thread-local multiply-accumulate counter.  Convolution and linear forwards
// report their MAC volume here whenever a MacCounter scope is active, which
// lets tests compare measured cost against the analytic model without touching
// the hot path in normal runs (a single thread-local branch per op call).
class MacCounter {
  public:
    MacCounter() : prev_(active_) { active_ = this; }
    ~MacCounter() { active_ = prev_; }
    MacCounter(const MacCounter&) = delete;
    MacCounter& operator=(const MacCounter&) = delete;

    uint64_t macs() const { return macs_; }

    static void add(uint64_t n) {
        if (active_) active_->macs_ += n;
    }

  private:
    uint64_t macs_ = 0;
    MacCounter* prev_;
    static thread_local MacCounter* active_;
};

inline thread_local MacCounter* MacCounter::active_ = nullptr;

}  // namespace afnet
