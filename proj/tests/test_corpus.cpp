#include <doctest.h>

#include <fstream>
#include <set>

#include "support.hpp"

using namespace factcrs;
using testing::temp_dir;

namespace {

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

void write_corpus(const std::filesystem::path& dir, const std::string& interactions) {
    write(dir / "attributes.tsv", "0\trock\n1\tjazz\n2\tindie\n");
    write(dir / "items.tsv", "0\t0,2\n1\t1\n2\t\n");
    write(dir / "interactions.tsv", interactions);
}

std::string error_of(const std::filesystem::path& dir) {
    try {
        load_dataset(dir);
    } catch (const CorpusError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("load_dataset reads the three tsv files") {
    auto dir = temp_dir("corpus-load");
    write_corpus(dir, "0\t0\t0,2\n1\t1\t1\n1\t0\t\n");
    const Dataset ds = load_dataset(dir);
    CHECK(ds.p() == 3);
    CHECK(ds.num_items == 3);
    CHECK(ds.num_users == 2);
    CHECK(ds.q() == 3);
    CHECK(ds.attributes.label(1) == "jazz");
    CHECK(ds.item_attributes[0] == std::vector<AttributeId>{0, 2});
    CHECK(ds.item_attributes[2].empty());
    CHECK(ds.interactions[0].mentioned() == std::vector<AttributeId>{0, 2});
    for (const auto& r : ds.interactions) CHECK(r.mentions.size() == ds.p());
    CHECK(ds.validation.empty_mentions == 1);
    CHECK(ds.validation.mentions_outside_item == 0);
}

TEST_CASE("empty interactions file gives q = 0") {
    auto dir = temp_dir("corpus-empty");
    write_corpus(dir, "");
    const Dataset ds = load_dataset(dir);
    CHECK(ds.q() == 0);
    CHECK(ds.num_users == 0);
}

TEST_CASE("unknown ids and malformed lines are reported") {
    auto dir = temp_dir("corpus-bad");
    write_corpus(dir, "0\t0\t0\n0\t7\t\n");
    CHECK(error_of(dir).find("7") != std::string::npos);
    CHECK(error_of(dir).find(":2") != std::string::npos);

    write_corpus(dir, "0\t0\t5\n");
    CHECK(error_of(dir).find("5") != std::string::npos);

    write_corpus(dir, "0\t0\t0\nnot a record\n");
    CHECK(error_of(dir).find("interactions.tsv:2") != std::string::npos);

    std::filesystem::remove(dir / "items.tsv");
    CHECK(error_of(dir).find("items.tsv") != std::string::npos);
}

TEST_CASE("mentions outside F_i are warned about, not rejected") {
    auto dir = temp_dir("corpus-outside");
    write_corpus(dir, "0\t1\t0,1\n");
    const Dataset ds = load_dataset(dir);
    CHECK(ds.validation.mentions_outside_item == 1);
    CHECK_FALSE(ds.validation.warnings.empty());
}

TEST_CASE("generate_synthetic is deterministic and respects its parameters") {
    SyntheticSpec spec;
    spec.users = 50;
    spec.items = 40;
    spec.attributes = 8;
    spec.interactions = 600;
    spec.depth = 4;
    spec.noise = 0.1;
    spec.seed = 7;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.dataset == b.dataset);

    const Dataset& ds = a.dataset;
    CHECK(ds.q() == 600);
    CHECK(ds.num_users == 50);
    CHECK(ds.num_items == 40);
    for (const auto& r : ds.interactions) {
        REQUIRE(r.mentions.size() == 8);
        CHECK(r.user >= 0);
        CHECK(static_cast<std::size_t>(r.user) < 50);
        CHECK(r.item >= 0);
        CHECK(static_cast<std::size_t>(r.item) < 40);
        for (AttributeId f : r.mentioned()) CHECK(ds.item_has_attribute(r.item, f));
    }
    CHECK(ds.validation.mentions_outside_item == 0);

    spec.seed = 8;
    CHECK_FALSE(generate_synthetic(spec).dataset == ds);
}

TEST_CASE("noise-free corpus: mentions equal F_i and follow the planted tree") {
    const auto corpus = generate_synthetic(testing::planted_spec());
    const auto& ds = corpus.dataset;
    for (const auto& r : ds.interactions) CHECK(r.mentioned() == ds.item_attributes[static_cast<std::size_t>(r.item)]);

    // Walking the planted tree with F_i lands on the leaf that holds the item.
    const auto& nodes = corpus.planted.nodes;
    for (std::size_t i = 0; i < ds.num_items; ++i) {
        int n = 0;
        while (nodes[static_cast<std::size_t>(n)].attribute) {
            const auto& node = nodes[static_cast<std::size_t>(n)];
            n = ds.item_has_attribute(static_cast<ItemId>(i), *node.attribute) ? node.yes_child : node.no_child;
        }
        const auto& items = nodes[static_cast<std::size_t>(n)].items;
        CHECK(std::count(items.begin(), items.end(), static_cast<ItemId>(i)) == 1);
    }
}

TEST_CASE("generate_synthetic rejects depth > p") {
    SyntheticSpec spec;
    spec.attributes = 3;
    spec.depth = 4;
    CHECK_THROWS_AS(generate_synthetic(spec), CorpusError);
}

TEST_CASE("save then load is the identity") {
    auto spec = testing::planted_spec();
    spec.noise = 0.2;
    const auto ds = generate_synthetic(spec).dataset;
    auto dir = temp_dir("corpus-roundtrip");
    save_dataset(ds, dir);
    CHECK(load_dataset(dir) == ds);
}

TEST_CASE("split_by_user sizes follow floor(0.8m), floor(0.1m), remainder") {
    auto sizes = [](std::size_t m, std::uint64_t seed) {
        Dataset ds;
        ds.num_users = m;
        const auto s = split_by_user(ds, seed);
        return std::vector<std::size_t>{s.train_users.size(), s.validation_users.size(), s.test_users.size()};
    };
    CHECK(sizes(100, 1) == std::vector<std::size_t>{80, 10, 10});
    for (std::size_t m : {10u, 11u, 57u, 1801u}) {
        const std::size_t train = m * 8 / 10, val = m / 10;
        CHECK(sizes(m, 3) == std::vector<std::size_t>{train, val, m - train - val});
    }
    CHECK(sizes(1801, 1) == std::vector<std::size_t>{1440, 180, 181});

    Dataset ds;
    ds.num_users = 9;
    CHECK_THROWS_AS(split_by_user(ds, 1), CorpusError);
}

TEST_CASE("split_by_user partitions every user exactly once, deterministically") {
    const auto ds = generate_synthetic(testing::planted_spec()).dataset;
    const auto a = split_by_user(ds, 1);
    CHECK(a == split_by_user(ds, 1));
    const auto b = split_by_user(ds, 2);
    CHECK(a.train_users.size() == b.train_users.size());
    CHECK_FALSE(a.train_users == b.train_users);

    std::vector<int> seen(ds.num_users, 0);
    for (const auto* part : {&a.train_users, &a.validation_users, &a.test_users})
        for (UserId u : *part) ++seen[static_cast<std::size_t>(u)];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

    const auto test_records = records_of_users(ds, a.test_users);
    std::set<UserId> test(a.test_users.begin(), a.test_users.end());
    for (const auto& r : test_records) CHECK(test.count(r.user) == 1);
}
