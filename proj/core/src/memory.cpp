#include "l2r/memory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "l2r/serialize.hpp"

namespace l2r {

MemoryBuffer::MemoryBuffer(double fraction, uint64_t seed) : fraction_(fraction), seed_(seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw ConfigError("memory fraction must be in (0, 1], got " + std::to_string(fraction));
}

int MemoryBuffer::populate(const TaskData& task, int task_id) {
    if (sampled_tasks_.count(task_id))
        throw ContractError("memory: task " + std::to_string(task_id) + " already sampled");
    sampled_tasks_.insert(task_id);
    int n = static_cast<int>(task.train.examples.size());
    // round half up
    int k = static_cast<int>(std::floor(fraction_ * n + 0.5));
    if (k > n) k = n;
    Rng rng(derive_seed(seed_, "memory", static_cast<uint64_t>(task_id)));
    auto idx = rng.sample_without_replacement(n, k);
    for (int i : idx) {
        const Example& e = task.train.examples[i];
        entries_.push_back({task_id, e.tokens, e.label, e.global_label, e.id});
    }
    return k;
}

std::vector<MemoryEntry> MemoryBuffer::router_training_view(Regime regime, int task_id) const {
    std::vector<MemoryEntry> out;
    if (regime == Regime::TIL) {
        if (task_id < 1) throw ContractError("memory: TIL view needs a task id");
        for (const auto& e : entries_)
            if (e.task_id == task_id) out.push_back(e);
    } else {
        out = entries_;
    }
    if (out.empty()) throw ContractError("memory: empty router training view");
    return out;
}

void MemoryBuffer::save_jsonl(const std::string& path) const {
    std::ostringstream os;
    for (const auto& e : entries_) {
        json rec = {{"task_id", e.task_id},
                    {"token_ids", e.tokens},
                    {"label", e.label},
                    {"global_label", e.global_label},
                    {"example_id", e.example_id}};
        os << rec.dump() << "\n";
    }
    write_file_atomic(path, os.str());
}

MemoryBuffer MemoryBuffer::load_jsonl(const std::string& path, double fraction, uint64_t seed) {
    MemoryBuffer buf(fraction, seed);
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("memory jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
        MemoryEntry entry;
        entry.task_id = rec.at("task_id");
        entry.tokens = rec.at("token_ids").get<std::vector<int>>();
        entry.label = rec.at("label");
        entry.global_label = rec.at("global_label");
        entry.example_id = rec.value("example_id", 0);
        buf.sampled_tasks_.insert(entry.task_id);
        buf.entries_.push_back(std::move(entry));
    }
    return buf;
}

}  // namespace l2r
