#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "l2r/memory.hpp"
#include "test_util.hpp"

using namespace l2r;

namespace {

TaskStream tiny_stream(int tasks = 3, int train = 40) {
    GeneratorSpec spec;
    spec.family = GeneratorSpec::Family::FarDomain;
    spec.tasks = tasks;
    spec.classes_per_task = 2;
    spec.train_examples = train;
    spec.val_examples = 10;
    spec.test_examples = 10;
    spec.vocab_size = 120;
    spec.seq_len = 12;
    spec.seed = 5;
    return generate_stream(spec);
}

std::multiset<int> ids_of(const Split& split) {
    std::multiset<int> out;
    for (const auto& e : split.examples) out.insert(e.id);
    return out;
}

}  // namespace

TEST_CASE("sample size is round(fraction * train) with half rounded up") {
    TaskData task;
    task.train.examples.resize(500);
    for (int i = 0; i < 500; ++i) task.train.examples[i].id = i;
    MemoryBuffer buf(0.10, 3);
    CHECK(buf.populate(task, 1) == 50);

    TaskData seven;
    seven.train.examples.resize(7);
    MemoryBuffer small(0.10, 3);
    CHECK(small.populate(seven, 1) == 1);  // 0.7 rounds to 1, never zero here

    TaskData five;
    five.train.examples.resize(5);
    MemoryBuffer half(0.10, 3);
    CHECK(half.populate(five, 1) == 1);  // 0.5 rounds up
}

TEST_CASE("fraction 1.0 stores exactly the training multiset") {
    auto stream = tiny_stream();
    MemoryBuffer buf(1.0, 9);
    for (int t = 0; t < 3; ++t) buf.populate(stream.tasks[t], t + 1);
    for (int t = 0; t < 3; ++t) {
        std::multiset<int> stored;
        for (const auto& e : buf.entries())
            if (e.task_id == t + 1) stored.insert(e.example_id);
        CHECK(stored == ids_of(stream.tasks[t].train));
    }
}

TEST_CASE("same seed samples the same entries; different seed differs") {
    auto stream = tiny_stream();
    auto ids = [&](uint64_t seed) {
        MemoryBuffer buf(0.25, seed);
        for (int t = 0; t < 3; ++t) buf.populate(stream.tasks[t], t + 1);
        std::vector<int> out;
        for (const auto& e : buf.entries()) out.push_back(e.example_id);
        return out;
    };
    CHECK(ids(11) == ids(11));
    CHECK(ids(11) != ids(12));
}

TEST_CASE("memory never leaks validation or test examples") {
    auto stream = tiny_stream();
    MemoryBuffer buf(0.5, 21);
    for (int t = 0; t < 3; ++t) {
        buf.populate(stream.tasks[t], t + 1);
        auto train = ids_of(stream.tasks[t].train);
        auto val = ids_of(stream.tasks[t].val);
        auto test = ids_of(stream.tasks[t].test);
        for (const auto& e : buf.entries()) {
            if (e.task_id != t + 1) continue;
            CHECK(train.count(e.example_id) == 1);
            CHECK(val.count(e.example_id) == 0);
            CHECK(test.count(e.example_id) == 0);
        }
    }
}

TEST_CASE("memory entries carry the task's labels verbatim") {
    auto stream = tiny_stream(2);
    MemoryBuffer buf(0.3, 4);
    buf.populate(stream.tasks[1], 2);
    for (const auto& e : buf.entries()) {
        auto it = std::find_if(stream.tasks[1].train.examples.begin(),
                               stream.tasks[1].train.examples.end(),
                               [&](const Example& x) { return x.id == e.example_id; });
        REQUIRE(it != stream.tasks[1].train.examples.end());
        CHECK(e.label == it->label);
        CHECK(e.global_label == it->global_label);
        CHECK(e.tokens == it->tokens);
    }
}

TEST_CASE("router training views: CIL sees all tasks, TIL only one") {
    auto stream = tiny_stream();
    MemoryBuffer buf(0.2, 7);
    for (int t = 0; t < 3; ++t) buf.populate(stream.tasks[t], t + 1);
    auto cil = buf.router_training_view(Regime::CIL);
    CHECK(cil.size() == buf.entries().size());
    auto til = buf.router_training_view(Regime::TIL, 2);
    CHECK_FALSE(til.empty());
    for (const auto& e : til) CHECK(e.task_id == 2);
    CHECK_THROWS_AS(buf.router_training_view(Regime::TIL), ContractError);
    CHECK_THROWS_AS(buf.router_training_view(Regime::TIL, 99), ContractError);
}

TEST_CASE("re-populating a task is a contract error; bad fraction a config error") {
    auto stream = tiny_stream(1);
    MemoryBuffer buf(0.2, 7);
    buf.populate(stream.tasks[0], 1);
    CHECK_THROWS_AS(buf.populate(stream.tasks[0], 1), ContractError);
    CHECK_THROWS_AS(MemoryBuffer(0.0, 1), ConfigError);
    CHECK_THROWS_AS(MemoryBuffer(1.5, 1), ConfigError);
}

TEST_CASE("save/load jsonl round trip preserves every field") {
    auto stream = tiny_stream();
    MemoryBuffer buf(0.2, 31);
    for (int t = 0; t < 3; ++t) buf.populate(stream.tasks[t], t + 1);
    std::string path = (std::filesystem::temp_directory_path() / "l2r_mem_test.jsonl").string();
    buf.save_jsonl(path);
    auto back = MemoryBuffer::load_jsonl(path, 0.2, 31);
    REQUIRE(back.entries().size() == buf.entries().size());
    for (size_t i = 0; i < buf.entries().size(); ++i) {
        CHECK(back.entries()[i].task_id == buf.entries()[i].task_id);
        CHECK(back.entries()[i].tokens == buf.entries()[i].tokens);
        CHECK(back.entries()[i].label == buf.entries()[i].label);
        CHECK(back.entries()[i].global_label == buf.entries()[i].global_label);
        CHECK(back.entries()[i].example_id == buf.entries()[i].example_id);
    }
    std::filesystem::remove(path);
}
