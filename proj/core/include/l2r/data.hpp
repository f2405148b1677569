#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "l2r/errors.hpp"
#include "l2r/rng.hpp"

namespace l2r {

// reserved token ids; content tokens start at kFirstContentToken
inline constexpr int kClsToken = 0;
inline constexpr int kPadToken = 1;
inline constexpr int kFirstContentToken = 2;

enum class Regime { CIL, TIL };

inline const char* regime_name(Regime r) { return r == Regime::CIL ? "CIL" : "TIL"; }

struct Example {
    std::vector<int> tokens;  // [CLS] first
    int label = 0;            // task-local class index
    int global_label = 0;     // index into the stream's global class map
    int id = 0;               // unique within the stream, across splits
};

struct Split {
    std::vector<Example> examples;
};

struct TaskData {
    std::string name;
    Split train, val, test;
    std::vector<std::string> class_names;  // task-local order
    std::vector<int> global_class_ids;     // local index -> global index
};

struct TaskStream {
    std::vector<TaskData> tasks;
    std::vector<std::string> global_class_names;
    std::string order_id;
    int num_global_classes() const { return static_cast<int>(global_class_names.size()); }
};

struct GeneratorSpec {
    enum class Family { FarDomain, NearDomain, MultilingualLike, Hierarchical };
    Family family = Family::FarDomain;
    int tasks = 5;
    int classes_per_task = 2;
    int train_examples = 120;
    int val_examples = 40;
    int test_examples = 40;
    int vocab_size = 400;
    int seq_len = 24;  // includes the leading [CLS]
    double noise_rate = 0.0;
    uint64_t seed = 1;
};

GeneratorSpec::Family family_from_string(const std::string& s);
std::string family_to_string(GeneratorSpec::Family f);

TaskStream generate_stream(const GeneratorSpec& spec);

// Reorders tasks. Named orders: "order1" (as generated), "order2" (reversed),
// "order3" (odd positions then even); or an explicit permutation "3,1,2"
// (1-based). Global class ids are unaffected.
TaskStream apply_order(const TaskStream& stream, const std::string& order);

struct IngestSchema {
    int max_seq_len = 32;
    std::string vocab_path;  // optional: maps "text" records, one token per line
    // when records lack a "split" field, apply this train/val/test ratio
    std::optional<std::array<double, 3>> split_ratio;
    uint64_t split_seed = 1;
    // when non-empty, records naming other tasks/labels are rejected
    std::vector<std::string> allowed_tasks;
    std::vector<std::string> allowed_labels;
};

TaskStream ingest_jsonl(const std::string& path, const IngestSchema& schema);
void export_jsonl(const TaskStream& stream, const std::string& path);

}  // namespace l2r
