#pragma once

#include <cstddef>
#include <cstdint>
#include <map>

namespace s4c {

// Per-generation counters. tokens_emitted = sum over rounds of (accepted + 1),
// capped by the generation budget; target_forward_calls = rounds + 1 (prefix pass
// plus one verification pass per round). Wall time is excluded from determinism
// guarantees.
struct GenStats {
    long long rounds = 0;
    long long tokens_emitted = 0;
    long long target_forward_calls = 0;
    long long draft_forward_calls = 0;
    std::map<int, long long> accepted_hist;  // accepted draft tokens per round
    long long wall_time_ns = 0;
    size_t peak_extra_bytes = 0;

    double mean_accepted() const;  // tokens_emitted / rounds; throws on rounds == 0
    void merge(const GenStats& other);
};

} // namespace s4c
