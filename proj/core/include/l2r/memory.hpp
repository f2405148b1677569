#pragma once

#include <set>
#include <string>
#include <vector>

#include "l2r/data.hpp"

namespace l2r {

struct MemoryEntry {
    int task_id = 0;  // 1-based
    std::vector<int> tokens;
    int label = 0;         // task-local
    int global_label = 0;  // CIL class space
    int example_id = 0;
};

// Label-preserving uniform sample of each task's training split, written once
// per task and immutable afterwards.
class MemoryBuffer {
public:
    MemoryBuffer(double fraction, uint64_t seed);

    double fraction() const { return fraction_; }
    uint64_t seed() const { return seed_; }

    // samples round(fraction * |train|) examples without replacement;
    // ContractError on a second call for the same task
    int populate(const TaskData& task, int task_id);

    const std::vector<MemoryEntry>& entries() const { return entries_; }

    // CIL: all entries; TIL: only the given task's entries (task_id 1-based)
    std::vector<MemoryEntry> router_training_view(Regime regime, int task_id = 0) const;

    void save_jsonl(const std::string& path) const;
    static MemoryBuffer load_jsonl(const std::string& path, double fraction, uint64_t seed);

private:
    double fraction_;
    uint64_t seed_;
    std::vector<MemoryEntry> entries_;
    std::set<int> sampled_tasks_;
};

}  // namespace l2r
