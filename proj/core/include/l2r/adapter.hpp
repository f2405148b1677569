#pragma once

#include <array>
#include <string>
#include <vector>

#include "l2r/tensor.hpp"

namespace l2r {

struct BackboneConfig;

enum class Target { Query = 0, Value = 1 };
inline constexpr int kNumTargets = 2;

struct AdapterConfig {
    int rank = 8;
    double dropout = 0.1;
    // alpha fixed to rank, so the path scale is 1; routing weights own scaling
    double scaling() const { return 1.0; }
};

// One low-rank pair: delta(x) = scaling * (drop(x) @ A^T) @ B^T.
// B starts at zero so a fresh adapter is an exact identity.
struct LoraPair {
    TensorPtr down;  // A, rank x d
    TensorPtr up;    // B, d x rank
    int rank = 0;
    double scaling = 1.0;
    double dropout_rate = 0.0;
};

struct TaskAdapter {
    int task_id = 0;  // 1-based
    std::vector<std::array<LoraPair, kNumTargets>> layers;
};

TensorPtr adapter_delta(const LoraPair& pair, const TensorPtr& x, bool training,
                        Rng* rng = nullptr);

class AdapterBank {
public:
    AdapterBank(AdapterConfig cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {}

    // appends a fresh adapter for the next task and makes it the sole
    // trainable one; returns the 1-based task id
    int add_task_adapter(const BackboneConfig& backbone_cfg);

    int size() const { return static_cast<int>(adapters_.size()); }
    const TaskAdapter& task(int task_id) const;  // 1-based
    const AdapterConfig& config() const { return cfg_; }

    int trainable_task() const { return trainable_; }  // 0 when none
    void freeze_all();
    std::vector<TensorPtr> trainable_params() const;

    // trainable adapter params for one task / backbone param count
    double parameter_fraction(const class Backbone& backbone) const;
    int64_t params_per_task() const;

    std::vector<uint8_t> serialize_task(int task_id) const;
    void save_task(const std::string& path, int task_id) const;
    // appends a task adapter read back from serialize_task bytes
    int load_task(const std::vector<uint8_t>& bytes, const BackboneConfig& backbone_cfg);
    int load_task_file(const std::string& path, const BackboneConfig& backbone_cfg);

private:
    AdapterConfig cfg_;
    uint64_t seed_;
    std::vector<TaskAdapter> adapters_;
    int trainable_ = 0;  // 1-based, 0 = none
};

}  // namespace l2r
