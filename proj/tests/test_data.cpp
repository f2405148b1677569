#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "l2r/data.hpp"
#include "test_util.hpp"

using namespace l2r;

namespace {

GeneratorSpec base_spec() {
    GeneratorSpec spec;
    spec.family = GeneratorSpec::Family::FarDomain;
    spec.tasks = 3;
    spec.classes_per_task = 2;
    spec.train_examples = 40;
    spec.val_examples = 12;
    spec.test_examples = 12;
    spec.vocab_size = 200;
    spec.seq_len = 16;
    spec.seed = 9;
    return spec;
}

std::set<int> content_tokens(const Split& split, int label) {
    std::set<int> out;
    for (const auto& e : split.examples)
        if (e.label == label)
            for (size_t i = 1; i < e.tokens.size(); ++i) out.insert(e.tokens[i]);
    return out;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("far-domain classes occupy disjoint token ranges, so an overlap oracle is exact") {
    auto stream = generate_stream(base_spec());
    // gather every (task, class) train token set; all pairs must be disjoint
    std::vector<std::set<int>> sets;
    for (const auto& task : stream.tasks)
        for (int c = 0; c < 2; ++c) sets.push_back(content_tokens(task.train, c));
    for (size_t a = 0; a < sets.size(); ++a)
        for (size_t b = a + 1; b < sets.size(); ++b) {
            std::vector<int> common;
            std::set_intersection(sets[a].begin(), sets[a].end(), sets[b].begin(), sets[b].end(),
                                  std::back_inserter(common));
            CHECK(common.empty());
        }
    // membership classification of test tokens by the train range is perfect
    int usable = 200 - kFirstContentToken;
    int block = usable / 3, sub = block / 2;
    for (int t = 0; t < 3; ++t)
        for (const auto& e : stream.tasks[t].test.examples) {
            int start = kFirstContentToken + t * block + e.label * sub;
            for (size_t i = 1; i < e.tokens.size(); ++i) {
                CHECK(e.tokens[i] >= start);
                CHECK(e.tokens[i] < start + sub);
            }
        }
}

TEST_CASE("label noise injects tokens outside the class range") {
    auto spec = base_spec();
    spec.noise_rate = 0.5;
    auto stream = generate_stream(spec);
    int usable = 200 - kFirstContentToken;
    int block = usable / 3, sub = block / 2;
    int outside = 0, total = 0;
    for (const auto& e : stream.tasks[0].train.examples) {
        int start = kFirstContentToken + e.label * sub;
        for (size_t i = 1; i < e.tokens.size(); ++i) {
            ++total;
            if (e.tokens[i] < start || e.tokens[i] >= start + sub) ++outside;
        }
    }
    // about half the tokens are uniform over the whole vocab
    CHECK(outside > total / 4);
}

TEST_CASE("generation is deterministic in the seed") {
    auto spec = base_spec();
    auto a = generate_stream(spec);
    auto b = generate_stream(spec);
    REQUIRE(a.tasks.size() == b.tasks.size());
    for (size_t t = 0; t < a.tasks.size(); ++t) {
        REQUIRE(a.tasks[t].train.examples.size() == b.tasks[t].train.examples.size());
        for (size_t i = 0; i < a.tasks[t].train.examples.size(); ++i) {
            CHECK(a.tasks[t].train.examples[i].tokens == b.tasks[t].train.examples[i].tokens);
            CHECK(a.tasks[t].train.examples[i].label == b.tasks[t].train.examples[i].label);
        }
    }
    spec.seed = 10;
    auto c = generate_stream(spec);
    CHECK(a.tasks[0].train.examples[0].tokens != c.tasks[0].train.examples[0].tokens);
}

TEST_CASE("splits are class-balanced and ids unique across the stream") {
    auto stream = generate_stream(base_spec());
    std::set<int> ids;
    for (const auto& task : stream.tasks) {
        for (const auto* split : {&task.train, &task.val, &task.test}) {
            int c0 = 0, c1 = 0;
            for (const auto& e : split->examples) {
                (e.label == 0 ? c0 : c1)++;
                CHECK(ids.insert(e.id).second);
                CHECK(e.tokens[0] == kClsToken);
                CHECK(static_cast<int>(e.tokens.size()) == 16);
            }
            CHECK(c0 == c1);
        }
    }
}

TEST_CASE("multilingual-like tasks share one label space; far-domain tasks do not") {
    auto spec = base_spec();
    spec.family = GeneratorSpec::Family::MultilingualLike;
    auto shared = generate_stream(spec);
    CHECK(shared.num_global_classes() == 2);
    for (const auto& task : shared.tasks) {
        CHECK(task.class_names == shared.tasks[0].class_names);
        CHECK(task.global_class_ids == std::vector<int>{0, 1});
    }
    auto disjoint = generate_stream(base_spec());
    CHECK(disjoint.num_global_classes() == 6);
    std::set<int> globals;
    for (const auto& task : disjoint.tasks)
        for (int g : task.global_class_ids) CHECK(globals.insert(g).second);
}

TEST_CASE("hierarchical classes draw only from concepts of earlier or equal tasks") {
    auto spec = base_spec();
    spec.family = GeneratorSpec::Family::Hierarchical;
    auto stream = generate_stream(spec);
    int usable = 200 - kFirstContentToken;
    int sub = usable / (3 * 2);
    for (int t = 0; t < 3; ++t)
        for (const auto& e : stream.tasks[t].train.examples)
            for (size_t i = 1; i < e.tokens.size(); ++i) {
                int cell = (e.tokens[i] - kFirstContentToken) / sub;
                int s = cell / 2, c = cell % 2;
                CHECK(s <= t);
                CHECK(c == e.label);
            }
}

TEST_CASE("export/ingest round trip reproduces the stream exactly") {
    auto stream = generate_stream(base_spec());
    std::string path = temp_path("l2r_data_roundtrip.jsonl");
    export_jsonl(stream, path);
    IngestSchema schema;
    schema.max_seq_len = 16;
    auto back = ingest_jsonl(path, schema);
    REQUIRE(back.tasks.size() == stream.tasks.size());
    CHECK(back.global_class_names == stream.global_class_names);
    for (size_t t = 0; t < stream.tasks.size(); ++t) {
        CHECK(back.tasks[t].name == stream.tasks[t].name);
        CHECK(back.tasks[t].class_names == stream.tasks[t].class_names);
        CHECK(back.tasks[t].global_class_ids == stream.tasks[t].global_class_ids);
        for (const auto& pair : {std::pair{&stream.tasks[t].train, &back.tasks[t].train},
                                 std::pair{&stream.tasks[t].val, &back.tasks[t].val},
                                 std::pair{&stream.tasks[t].test, &back.tasks[t].test}}) {
            REQUIRE(pair.second->examples.size() == pair.first->examples.size());
            for (size_t i = 0; i < pair.first->examples.size(); ++i) {
                const Example& orig = pair.first->examples[i];
                const Example& got = pair.second->examples[i];
                CHECK(got.tokens == orig.tokens);
                CHECK(got.label == orig.label);
                CHECK(got.global_label == orig.global_label);
                CHECK(got.id == orig.id);
            }
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("missing splits are filled by the configured ratio, or rejected without one") {
    std::string path = temp_path("l2r_data_nosplit.jsonl");
    std::vector<std::string> lines;
    for (int i = 0; i < 40; ++i)
        lines.push_back(R"({"task": "t1", "label": ")" + std::string(i % 2 ? "pos" : "neg") +
                        R"(", "tokens": [)" + std::to_string(2 + i) + "]}");
    write_lines(path, lines);
    IngestSchema schema;
    schema.max_seq_len = 8;
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);
    schema.split_ratio = {{0.5, 0.25, 0.25}};
    auto stream = ingest_jsonl(path, schema);
    REQUIRE(stream.tasks.size() == 1);
    CHECK(stream.tasks[0].train.examples.size() == 20);
    CHECK(stream.tasks[0].val.examples.size() == 10);
    CHECK(stream.tasks[0].test.examples.size() == 10);
    // deterministic in the split seed
    auto again = ingest_jsonl(path, schema);
    CHECK(again.tasks[0].train.examples[0].id == stream.tasks[0].train.examples[0].id);
    std::filesystem::remove(path);
}

TEST_CASE("text records tokenize through the vocab file") {
    std::string vocab_path = temp_path("l2r_data_vocab.txt");
    write_lines(vocab_path, {"[CLS]", "[PAD]", "good", "bad", "movie"});
    std::string path = temp_path("l2r_data_text.jsonl");
    write_lines(path, {R"({"task": "t1", "split": "train", "label": "pos", "text": "good movie"})",
                       R"({"task": "t1", "split": "train", "label": "neg", "text": "bad movie"})"});
    IngestSchema schema;
    schema.max_seq_len = 8;
    schema.vocab_path = vocab_path;
    auto stream = ingest_jsonl(path, schema);
    CHECK(stream.tasks[0].train.examples[0].tokens == std::vector<int>{kClsToken, 2, 4});
    CHECK(stream.tasks[0].train.examples[1].tokens == std::vector<int>{kClsToken, 3, 4});

    // without the vocab, text records are rejected
    schema.vocab_path.clear();
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);
    // unknown word
    write_lines(path, {R"({"task": "t1", "split": "train", "label": "pos", "text": "great"})"});
    schema.vocab_path = vocab_path;
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);
    std::filesystem::remove(path);
    std::filesystem::remove(vocab_path);
}

TEST_CASE("malformed input is rejected with a parse error") {
    std::string path = temp_path("l2r_data_bad.jsonl");
    IngestSchema schema;
    schema.max_seq_len = 8;

    write_lines(path, {});
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // empty file

    write_lines(path, {"not json"});
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);

    write_lines(path, {R"({"task": "t1", "split": "dev", "label": "a", "tokens": [2]})"});
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // bad split name

    write_lines(path, {R"({"task": "t1", "split": "train", "label": "a", "tokens": [-3]})"});
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // negative token

    write_lines(path, {R"({"task": "t1", "split": "train", "label": "a"})"});
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // no payload

    write_lines(path,
                {R"({"task": "t1", "split": "train", "label": "a", "label_id": 1, "tokens": [2]})"});
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // gap in label ids

    write_lines(path,
                {R"({"task": "t1", "split": "train", "label": "a", "label_id": 0, "tokens": [2]})",
                 R"({"task": "t1", "split": "train", "label": "b", "label_id": 0, "tokens": [2]})"});
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // slot claimed twice

    write_lines(path, {R"({"task": "t2", "split": "train", "label": "a", "tokens": [2]})"});
    schema.allowed_tasks = {"t1"};
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // task not allowed
    schema.allowed_tasks.clear();
    schema.allowed_labels = {"b"};
    CHECK_THROWS_AS(ingest_jsonl(path, schema), ParseError);  // label not allowed
    std::filesystem::remove(path);
}

TEST_CASE("over-long token lists are truncated to the schema limit") {
    std::string path = temp_path("l2r_data_long.jsonl");
    write_lines(path, {R"({"task": "t1", "split": "train", "label": "a", "tokens": )"
                       R"([2, 3, 4, 5, 6, 7, 8, 9, 10, 11]})",
                       R"({"task": "t1", "split": "train", "label": "b", "tokens": [2]})"});
    IngestSchema schema;
    schema.max_seq_len = 5;
    auto stream = ingest_jsonl(path, schema);
    CHECK(stream.tasks[0].train.examples[0].tokens == std::vector<int>{kClsToken, 2, 3, 4, 5});
    std::filesystem::remove(path);
}

TEST_CASE("task orders permute tasks without touching global ids") {
    auto stream = generate_stream(base_spec());
    auto rev = apply_order(stream, "order2");
    CHECK(rev.tasks[0].name == "task3");
    CHECK(rev.tasks[2].name == "task1");
    CHECK(rev.global_class_names == stream.global_class_names);
    CHECK(rev.tasks[0].global_class_ids == stream.tasks[2].global_class_ids);

    auto interleaved = apply_order(stream, "order3");
    CHECK(interleaved.tasks[0].name == "task1");
    CHECK(interleaved.tasks[1].name == "task3");
    CHECK(interleaved.tasks[2].name == "task2");

    auto explicit_order = apply_order(stream, "3,1,2");
    CHECK(explicit_order.tasks[0].name == "task3");
    CHECK(explicit_order.tasks[1].name == "task1");
    CHECK(explicit_order.tasks[2].name == "task2");

    CHECK_THROWS_AS(apply_order(stream, "4,1,2"), ConfigError);
    CHECK_THROWS_AS(apply_order(stream, "1,1,2"), ConfigError);
    CHECK_THROWS_AS(apply_order(stream, "1,2"), ConfigError);
}

TEST_CASE("generator spec validation") {
    auto spec = base_spec();
    spec.classes_per_task = 1;
    CHECK_THROWS_AS(generate_stream(spec), ConfigError);
    spec = base_spec();
    spec.vocab_size = 5;
    CHECK_THROWS_AS(generate_stream(spec), ConfigError);
    spec = base_spec();
    spec.noise_rate = 1.0;
    CHECK_THROWS_AS(generate_stream(spec), ConfigError);
    spec = base_spec();
    spec.seq_len = 1;
    CHECK_THROWS_AS(generate_stream(spec), ConfigError);
    CHECK_THROWS_AS(family_from_string("nearby"), ConfigError);
    for (auto f : {GeneratorSpec::Family::FarDomain, GeneratorSpec::Family::NearDomain,
                   GeneratorSpec::Family::MultilingualLike, GeneratorSpec::Family::Hierarchical})
        CHECK(family_from_string(family_to_string(f)) == f);
}
