#include "l2r/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "l2r/serialize.hpp"

namespace l2r {

GeneratorSpec::Family family_from_string(const std::string& s) {
    if (s == "far-domain") return GeneratorSpec::Family::FarDomain;
    if (s == "near-domain") return GeneratorSpec::Family::NearDomain;
    if (s == "multilingual-like") return GeneratorSpec::Family::MultilingualLike;
    if (s == "hierarchical") return GeneratorSpec::Family::Hierarchical;
    throw ConfigError("unknown generator family: " + s);
}

std::string family_to_string(GeneratorSpec::Family f) {
    switch (f) {
        case GeneratorSpec::Family::FarDomain: return "far-domain";
        case GeneratorSpec::Family::NearDomain: return "near-domain";
        case GeneratorSpec::Family::MultilingualLike: return "multilingual-like";
        case GeneratorSpec::Family::Hierarchical: return "hierarchical";
    }
    return "?";
}

namespace {

// a class-conditional token distribution: weighted mixture of uniform ranges
struct TokenMixture {
    struct Range {
        int start, len;
        double weight;
    };
    std::vector<Range> ranges;

    int sample(Rng& rng) const {
        double u = rng.uniform();
        double acc = 0.0;
        for (const auto& r : ranges) {
            acc += r.weight;
            if (u < acc || &r == &ranges.back()) {
                // power-law skew inside the range: a few high-frequency
                // "keyword" tokens per class, like topical text
                int idx = static_cast<int>(r.len * std::pow(rng.uniform(), 4.0));
                return r.start + std::min(idx, r.len - 1);
            }
        }
        return ranges.back().start;
    }
};

// token distribution for class c of task t under the spec's family
TokenMixture class_mixture(const GeneratorSpec& spec, int t, int c) {
    int usable = spec.vocab_size - kFirstContentToken;
    int C = spec.classes_per_task;
    TokenMixture mix;
    switch (spec.family) {
        case GeneratorSpec::Family::FarDomain:
        case GeneratorSpec::Family::MultilingualLike: {
            // disjoint per-task blocks, disjoint per-class sub-blocks
            int block = usable / spec.tasks;
            int sub = std::max(1, block / C);
            int start = kFirstContentToken + t * block + c * sub;
            mix.ranges.push_back({start, sub, 1.0});
            break;
        }
        case GeneratorSpec::Family::NearDomain: {
            // shared topic pool; class (t, c) peaks on topic t+c with spillover
            // onto the next topic, so class boundaries shift across tasks
            int topics = spec.tasks + C;
            int sub = std::max(1, usable / topics);
            int main_start = kFirstContentToken + ((t + c) % topics) * sub;
            int side_start = kFirstContentToken + ((t + c + 1) % topics) * sub;
            mix.ranges.push_back({main_start, sub, 0.7});
            mix.ranges.push_back({side_start, sub, 0.3});
            break;
        }
        case GeneratorSpec::Family::Hierarchical: {
            // concept grid: class (t, c) draws uniformly from the class-c
            // concepts of all tasks up to and including t
            int concepts = spec.tasks * C;
            int sub = std::max(1, usable / concepts);
            for (int s = 0; s <= t; ++s) {
                int start = kFirstContentToken + (s * C + c) * sub;
                mix.ranges.push_back({start, sub, 1.0 / (t + 1)});
            }
            break;
        }
    }
    return mix;
}

Example make_example(const GeneratorSpec& spec, const TokenMixture& mix, Rng& rng, int label,
                     int global_label, int id) {
    Example e;
    e.tokens.reserve(spec.seq_len);
    e.tokens.push_back(kClsToken);
    int usable = spec.vocab_size - kFirstContentToken;
    for (int i = 1; i < spec.seq_len; ++i) {
        if (spec.noise_rate > 0.0 && rng.uniform() < spec.noise_rate)
            e.tokens.push_back(kFirstContentToken +
                               static_cast<int>(rng.uniform_int(0, usable - 1)));
        else
            e.tokens.push_back(mix.sample(rng));
    }
    e.label = label;
    e.global_label = global_label;
    e.id = id;
    return e;
}

}  // namespace

TaskStream generate_stream(const GeneratorSpec& spec) {
    if (spec.classes_per_task < 2) throw ConfigError("generator: classes-per-task must be >= 2");
    if (spec.tasks < 1) throw ConfigError("generator: tasks must be >= 1");
    if (spec.seq_len < 2 || spec.seq_len > 4096) throw ConfigError("generator: bad seq_len");
    if (spec.vocab_size - kFirstContentToken < spec.tasks * spec.classes_per_task)
        throw ConfigError("generator: vocab too small for task/class layout");
    if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0)
        throw ConfigError("generator: noise-rate must be in [0, 1)");

    const bool shared_labels = spec.family == GeneratorSpec::Family::MultilingualLike;
    TaskStream stream;
    stream.order_id = "order1";
    if (shared_labels)
        for (int c = 0; c < spec.classes_per_task; ++c)
            stream.global_class_names.push_back("class" + std::to_string(c + 1));

    int next_id = 0;
    for (int t = 0; t < spec.tasks; ++t) {
        TaskData task;
        task.name = "task" + std::to_string(t + 1);
        std::vector<TokenMixture> mixes;
        for (int c = 0; c < spec.classes_per_task; ++c) {
            mixes.push_back(class_mixture(spec, t, c));
            if (shared_labels) {
                task.class_names.push_back(stream.global_class_names[c]);
                task.global_class_ids.push_back(c);
            } else {
                std::string name = task.name + "-c" + std::to_string(c + 1);
                task.class_names.push_back(name);
                task.global_class_ids.push_back(static_cast<int>(stream.global_class_names.size()));
                stream.global_class_names.push_back(name);
            }
        }
        Rng rng(derive_seed(spec.seed, "gen_task", static_cast<uint64_t>(t)));
        auto fill = [&](Split& split, int n) {
            for (int i = 0; i < n; ++i) {
                int c = i % spec.classes_per_task;  // exact class balance
                split.examples.push_back(make_example(spec, mixes[c], rng, c,
                                                      task.global_class_ids[c], next_id++));
            }
            rng.shuffle(split.examples);
        };
        fill(task.train, spec.train_examples);
        fill(task.val, spec.val_examples);
        fill(task.test, spec.test_examples);
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

TaskStream apply_order(const TaskStream& stream, const std::string& order) {
    int n = static_cast<int>(stream.tasks.size());
    std::vector<int> perm;
    if (order.empty() || order == "order1") {
        for (int i = 0; i < n; ++i) perm.push_back(i);
    } else if (order == "order2") {
        for (int i = n - 1; i >= 0; --i) perm.push_back(i);
    } else if (order == "order3") {
        for (int i = 0; i < n; i += 2) perm.push_back(i);
        for (int i = 1; i < n; i += 2) perm.push_back(i);
    } else {
        std::istringstream is(order);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            int v = std::stoi(tok) - 1;
            if (v < 0 || v >= n) throw ConfigError("order: task index out of range: " + tok);
            perm.push_back(v);
        }
        std::vector<bool> seen(n, false);
        for (int v : perm) {
            if (seen[v]) throw ConfigError("order: duplicate task in permutation");
            seen[v] = true;
        }
        if (static_cast<int>(perm.size()) != n)
            throw ConfigError("order: permutation length mismatch");
    }
    TaskStream out;
    out.global_class_names = stream.global_class_names;
    out.order_id = order.empty() ? "order1" : order;
    for (int i : perm) out.tasks.push_back(stream.tasks[i]);
    return out;
}

namespace {

std::map<std::string, int> load_vocab(const std::string& path) {
    std::map<std::string, int> vocab;
    std::istringstream in(read_text_file(path));
    std::string line;
    int id = 0;
    while (std::getline(in, line)) vocab[line] = id++;
    return vocab;
}

}  // namespace

TaskStream ingest_jsonl(const std::string& path, const IngestSchema& schema) {
    std::istringstream in(read_text_file(path));
    std::map<std::string, int> vocab;
    if (!schema.vocab_path.empty()) vocab = load_vocab(schema.vocab_path);

    struct RawRec {
        std::string task, split, label;
        std::vector<int> tokens;
        // optional explicit indices; when present they pin the label order so a
        // round trip through export_jsonl reproduces the original mapping
        int label_id = -1, global_id = -1, id = -1;
    };
    std::vector<RawRec> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        RawRec r;
        try {
            r.task = rec.at("task").get<std::string>();
            r.label = rec.at("label").get<std::string>();
            r.split = rec.value("split", "");
            r.label_id = rec.value("label_id", -1);
            r.global_id = rec.value("global_id", -1);
            r.id = rec.value("id", -1);
            if (rec.contains("tokens")) {
                r.tokens = rec.at("tokens").get<std::vector<int>>();
            } else if (rec.contains("text")) {
                if (vocab.empty())
                    throw ParseError("line " + std::to_string(lineno) +
                                     ": text record but no vocab file supplied");
                std::istringstream ts(rec.at("text").get<std::string>());
                std::string w;
                while (ts >> w) {
                    auto it = vocab.find(w);
                    if (it == vocab.end())
                        throw ParseError("line " + std::to_string(lineno) +
                                         ": token not in vocab: " + w);
                    r.tokens.push_back(it->second);
                }
            } else {
                throw ParseError("line " + std::to_string(lineno) + ": no tokens or text field");
            }
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!r.split.empty() && r.split != "train" && r.split != "val" && r.split != "test")
            throw ParseError("line " + std::to_string(lineno) + ": bad split: " + r.split);
        if (!schema.allowed_tasks.empty() &&
            std::find(schema.allowed_tasks.begin(), schema.allowed_tasks.end(), r.task) ==
                schema.allowed_tasks.end())
            throw ParseError("line " + std::to_string(lineno) + ": unknown task: " + r.task);
        if (!schema.allowed_labels.empty() &&
            std::find(schema.allowed_labels.begin(), schema.allowed_labels.end(), r.label) ==
                schema.allowed_labels.end())
            throw ParseError("line " + std::to_string(lineno) + ": unknown label: " + r.label);
        // [CLS] is owned by ingestion
        std::vector<int> toks{kClsToken};
        for (int t : r.tokens) {
            if (static_cast<int>(toks.size()) >= schema.max_seq_len) break;
            if (t < 0) throw ParseError("line " + std::to_string(lineno) + ": negative token id");
            toks.push_back(t);
        }
        r.tokens = std::move(toks);
        records.push_back(std::move(r));
    }
    if (records.empty()) throw ParseError("ingest: no records in " + path);

    bool any_missing_split = std::any_of(records.begin(), records.end(),
                                         [](const RawRec& r) { return r.split.empty(); });
    if (any_missing_split && !schema.split_ratio)
        throw ParseError("ingest: records lack a split and no split ratio given");

    TaskStream stream;
    stream.order_id = "ingested";
    std::vector<std::string> task_order;
    std::map<std::string, size_t> task_index;
    std::map<std::string, int> global_labels;
    int next_id = 0;
    for (const auto& r : records) {
        if (!task_index.count(r.task)) {
            task_index[r.task] = stream.tasks.size();
            stream.tasks.push_back(TaskData{});
            stream.tasks.back().name = r.task;
        }
        TaskData& task = stream.tasks[task_index[r.task]];
        int local;
        auto it = std::find(task.class_names.begin(), task.class_names.end(), r.label);
        if (it == task.class_names.end()) {
            // explicit indices pin the slot; otherwise first appearance decides
            local = r.label_id >= 0 ? r.label_id : static_cast<int>(task.class_names.size());
            if (local >= static_cast<int>(task.class_names.size())) {
                task.class_names.resize(local + 1);
                task.global_class_ids.resize(local + 1, -1);
            }
            if (!task.class_names[local].empty())
                throw ParseError("ingest: label slot " + std::to_string(local) + " of task " +
                                 r.task + " claimed by both " + task.class_names[local] +
                                 " and " + r.label);
            task.class_names[local] = r.label;
            if (!global_labels.count(r.label)) {
                int g = r.global_id >= 0 ? r.global_id
                                         : static_cast<int>(stream.global_class_names.size());
                if (g >= static_cast<int>(stream.global_class_names.size()))
                    stream.global_class_names.resize(g + 1);
                if (!stream.global_class_names[g].empty() && stream.global_class_names[g] != r.label)
                    throw ParseError("ingest: global class slot " + std::to_string(g) +
                                     " claimed by both " + stream.global_class_names[g] +
                                     " and " + r.label);
                stream.global_class_names[g] = r.label;
                global_labels[r.label] = g;
            }
            task.global_class_ids[local] = global_labels[r.label];
        } else {
            local = static_cast<int>(it - task.class_names.begin());
            if (r.label_id >= 0 && r.label_id != local)
                throw ParseError("ingest: inconsistent label_id for " + r.label + " in task " +
                                 r.task);
        }
        Example e;
        e.tokens = r.tokens;
        e.label = local;
        e.global_label = task.global_class_ids[local];
        e.id = r.id >= 0 ? r.id : next_id++;
        Split* target = nullptr;
        if (r.split == "train") target = &task.train;
        else if (r.split == "val") target = &task.val;
        else if (r.split == "test") target = &task.test;
        if (target) target->examples.push_back(std::move(e));
        else task.train.examples.push_back(std::move(e));  // provisional, re-split below
    }

    for (const auto& task : stream.tasks)
        for (const auto& name : task.class_names)
            if (name.empty())
                throw ParseError("ingest: gap in label_id numbering for task " + task.name);
    for (const auto& name : stream.global_class_names)
        if (name.empty()) throw ParseError("ingest: gap in global_id numbering");

    if (any_missing_split) {
        const auto& ratio = *schema.split_ratio;
        for (auto& task : stream.tasks) {
            auto pool = std::move(task.train.examples);
            task.train.examples.clear();
            Rng rng(derive_seed(schema.split_seed, "split", fnv1a64(task.name)));
            rng.shuffle(pool);
            size_t n = pool.size();
            size_t ntrain = static_cast<size_t>(ratio[0] * n);
            size_t nval = static_cast<size_t>(ratio[1] * n);
            for (size_t i = 0; i < n; ++i) {
                if (i < ntrain) task.train.examples.push_back(std::move(pool[i]));
                else if (i < ntrain + nval) task.val.examples.push_back(std::move(pool[i]));
                else task.test.examples.push_back(std::move(pool[i]));
            }
        }
    }
    return stream;
}

void export_jsonl(const TaskStream& stream, const std::string& path) {
    std::ostringstream os;
    auto dump_split = [&](const TaskData& task, const Split& split, const char* name) {
        for (const auto& e : split.examples) {
            // the leading [CLS] is re-added on ingest
            std::vector<int> toks(e.tokens.begin() + (e.tokens.empty() ? 0 : 1), e.tokens.end());
            json rec = {{"task", task.name},
                        {"split", name},
                        {"tokens", toks},
                        {"label", task.class_names[e.label]},
                        {"label_id", e.label},
                        {"global_id", e.global_label},
                        {"id", e.id}};
            os << rec.dump() << "\n";
        }
    };
    for (const auto& task : stream.tasks) {
        dump_split(task, task.train, "train");
        dump_split(task, task.val, "val");
        dump_split(task, task.test, "test");
    }
    write_file_atomic(path, os.str());
}

}  // namespace l2r
