#include "factcrs/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>

#include "factcrs/random.hpp"

namespace factcrs {

AttributeVocabulary::AttributeVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (!seen.insert(n).second) throw CorpusError("duplicate attribute label '" + n + "'");
    }
}

std::optional<AttributeId> AttributeVocabulary::find(const std::string& label) const {
    auto it = std::find(names_.begin(), names_.end(), label);
    if (it == names_.end()) return std::nullopt;
    return static_cast<AttributeId>(it - names_.begin());
}

std::size_t InteractionRecord::mention_count() const {
    return static_cast<std::size_t>(std::count(mentions.begin(), mentions.end(), true));
}

std::vector<AttributeId> InteractionRecord::mentioned() const {
    std::vector<AttributeId> out;
    for (std::size_t a = 0; a < mentions.size(); ++a)
        if (mentions[a]) out.push_back(static_cast<AttributeId>(a));
    return out;
}

bool Dataset::item_has_attribute(ItemId item, AttributeId a) const {
    const auto& attrs = item_attributes.at(static_cast<std::size_t>(item));
    return std::binary_search(attrs.begin(), attrs.end(), a);
}

void validate(Dataset& dataset) {
    ValidationReport report;
    for (std::size_t k = 0; k < dataset.interactions.size(); ++k) {
        const auto& r = dataset.interactions[k];
        if (r.mention_count() == 0) ++report.empty_mentions;
        for (AttributeId a : r.mentioned()) {
            if (!dataset.item_has_attribute(r.item, a)) {
                ++report.mentions_outside_item;
                report.warnings.push_back("interaction " + std::to_string(k) + ": attribute " + std::to_string(a) +
                                          " mentioned but not in attributes of item " + std::to_string(r.item));
                break;
            }
        }
    }
    if (report.empty_mentions > 0)
        report.warnings.push_back(std::to_string(report.empty_mentions) + " interaction(s) with no mentioned attribute");
    dataset.validation = std::move(report);
}

// --- TSV ingestion -----------------------------------------------------------

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct LineContext {
    std::string file;
    std::size_t line;
    [[noreturn]] void fail(const std::string& what) const {
        throw CorpusError(file + ":" + std::to_string(line) + ": " + what);
    }
};

std::int32_t parse_id(std::string_view s, const LineContext& ctx) {
    std::int32_t v = -1;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) ctx.fail("malformed id '" + std::string(s) + "'");
    return v;
}

std::vector<AttributeId> parse_id_list(std::string_view s, std::size_t p, const LineContext& ctx) {
    std::vector<AttributeId> out;
    if (s.empty()) return out;
    for (auto tok : split(s, ',')) {
        AttributeId a = parse_id(tok, ctx);
        if (static_cast<std::size_t>(a) >= p) ctx.fail("unknown attribute id " + std::to_string(a));
        out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CorpusError("missing file: " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string join_ids(const std::vector<AttributeId>& ids) {
    std::string s;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (k) s += ',';
        s += std::to_string(ids[k]);
    }
    return s;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto attr_path = dir / "attributes.tsv";
    const auto item_path = dir / "items.tsv";
    const auto inter_path = dir / "interactions.tsv";
    for (const auto& f : {attr_path, item_path, inter_path})
        if (!std::filesystem::exists(f)) throw CorpusError("missing file: " + f.string());

    Dataset ds;

    std::map<AttributeId, std::string> labels;
    auto lines = read_lines(attr_path);
    for (std::size_t k = 0; k < lines.size(); ++k) {
        LineContext ctx{"attributes.tsv", k + 1};
        if (lines[k].empty()) continue;
        auto cols = split(lines[k], '\t');
        if (cols.size() != 2) ctx.fail("expected 2 tab-separated columns");
        AttributeId id = parse_id(cols[0], ctx);
        if (!labels.emplace(id, std::string(cols[1])).second) ctx.fail("duplicate attribute id " + std::to_string(id));
    }
    std::vector<std::string> names;
    for (const auto& [id, label] : labels) {
        if (static_cast<std::size_t>(id) != names.size())
            throw CorpusError("attributes.tsv: attribute ids are not dense (missing " + std::to_string(names.size()) + ")");
        names.push_back(label);
    }
    ds.attributes = AttributeVocabulary(std::move(names));
    const std::size_t p = ds.p();

    std::map<ItemId, std::vector<AttributeId>> items;
    lines = read_lines(item_path);
    for (std::size_t k = 0; k < lines.size(); ++k) {
        LineContext ctx{"items.tsv", k + 1};
        if (lines[k].empty()) continue;
        auto cols = split(lines[k], '\t');
        if (cols.size() != 2) ctx.fail("expected 2 tab-separated columns");
        ItemId id = parse_id(cols[0], ctx);
        if (!items.emplace(id, parse_id_list(cols[1], p, ctx)).second) ctx.fail("duplicate item id " + std::to_string(id));
    }
    for (auto& [id, attrs] : items) {
        if (static_cast<std::size_t>(id) != ds.item_attributes.size())
            throw CorpusError("items.tsv: item ids are not dense (missing " + std::to_string(ds.item_attributes.size()) + ")");
        ds.item_attributes.push_back(std::move(attrs));
    }
    ds.num_items = ds.item_attributes.size();

    lines = read_lines(inter_path);
    std::size_t max_user = 0;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        LineContext ctx{"interactions.tsv", k + 1};
        if (lines[k].empty()) continue;
        auto cols = split(lines[k], '\t');
        if (cols.size() != 3) ctx.fail("expected 3 tab-separated columns");
        InteractionRecord r;
        r.user = parse_id(cols[0], ctx);
        r.item = parse_id(cols[1], ctx);
        if (static_cast<std::size_t>(r.item) >= ds.num_items) ctx.fail("unknown item id " + std::to_string(r.item));
        r.mentions.assign(p, false);
        for (AttributeId a : parse_id_list(cols[2], p, ctx)) r.mentions[static_cast<std::size_t>(a)] = true;
        max_user = std::max(max_user, static_cast<std::size_t>(r.user) + 1);
        ds.interactions.push_back(std::move(r));
    }
    ds.num_users = max_user;
    validate(ds);
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw CorpusError("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("attributes.tsv");
        for (std::size_t a = 0; a < dataset.p(); ++a) out << a << '\t' << dataset.attributes.names()[a] << '\n';
    }
    {
        auto out = open("items.tsv");
        for (std::size_t i = 0; i < dataset.item_attributes.size(); ++i)
            out << i << '\t' << join_ids(dataset.item_attributes[i]) << '\n';
    }
    {
        auto out = open("interactions.tsv");
        for (const auto& r : dataset.interactions) out << r.user << '\t' << r.item << '\t' << join_ids(r.mentioned()) << '\n';
    }
}

// --- synthetic generator -----------------------------------------------------

namespace {

// Grows the planted tree breadth-first; every internal node picks an attribute unused on its path.
void plant_node(PlantedTree& tree, int node, std::vector<AttributeId> path_attrs, std::size_t depth_left,
                std::size_t p, Rng& rng) {
    if (depth_left == 0) return;
    std::vector<AttributeId> free;
    for (std::size_t a = 0; a < p; ++a)
        if (std::find(path_attrs.begin(), path_attrs.end(), static_cast<AttributeId>(a)) == path_attrs.end())
            free.push_back(static_cast<AttributeId>(a));
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    const AttributeId attr = free[pick(rng)];
    tree.nodes[static_cast<std::size_t>(node)].attribute = attr;
    const int yes = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int no = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[static_cast<std::size_t>(node)].yes_child = yes;
    tree.nodes[static_cast<std::size_t>(node)].no_child = no;
    path_attrs.push_back(attr);
    plant_node(tree, yes, path_attrs, depth_left - 1, p, rng);
    plant_node(tree, no, path_attrs, depth_left - 1, p, rng);
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    if (spec.users < 1 || spec.items < 1 || spec.attributes < 1)
        throw CorpusError("synthetic corpus requires users, items, attributes >= 1");
    if (spec.depth > spec.attributes) throw CorpusError("planted depth exceeds attribute count");
    if (spec.noise < 0.0 || spec.noise > 1.0) throw CorpusError("noise rate must lie in [0,1]");

    Rng rng(spec.seed);
    SyntheticCorpus out;
    Dataset& ds = out.dataset;
    const std::size_t p = spec.attributes;

    std::vector<std::string> names;
    for (std::size_t a = 0; a < p; ++a) names.push_back("attr_" + std::to_string(a));
    ds.attributes = AttributeVocabulary(std::move(names));
    ds.num_users = spec.users;
    ds.num_items = spec.items;

    PlantedTree& tree = out.planted;
    tree.nodes.emplace_back();
    plant_node(tree, 0, {}, spec.depth, p, rng);

    std::vector<int> leaves;
    for (std::size_t k = 0; k < tree.nodes.size(); ++k)
        if (!tree.nodes[k].attribute) leaves.push_back(static_cast<int>(k));

    // Items are dealt to leaves in shuffled order so leaf sizes differ by at most one.
    std::vector<ItemId> order(spec.items);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> item_leaf(spec.items);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const int leaf = leaves[k % leaves.size()];
        tree.nodes[static_cast<std::size_t>(leaf)].items.push_back(order[k]);
        item_leaf[static_cast<std::size_t>(order[k])] = leaf;
    }
    for (auto& node : tree.nodes) std::sort(node.items.begin(), node.items.end());

    // F_i: yes-branch attributes on the item's planted path plus random off-path extras.
    std::vector<int> parent(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
        if (tree.nodes[k].yes_child >= 0) parent[static_cast<std::size_t>(tree.nodes[k].yes_child)] = static_cast<int>(k);
        if (tree.nodes[k].no_child >= 0) parent[static_cast<std::size_t>(tree.nodes[k].no_child)] = static_cast<int>(k);
    }
    std::bernoulli_distribution extra(spec.extra_attribute_rate);
    ds.item_attributes.assign(spec.items, {});
    std::vector<int> item_branch(spec.items, 0);  // 0 = root yes subtree, 1 = root no subtree
    for (std::size_t i = 0; i < spec.items; ++i) {
        std::vector<bool> on_path(p, false), yes(p, false);
        int child = item_leaf[i];
        while (parent[static_cast<std::size_t>(child)] >= 0) {
            const int up = parent[static_cast<std::size_t>(child)];
            const auto a = static_cast<std::size_t>(*tree.nodes[static_cast<std::size_t>(up)].attribute);
            on_path[a] = true;
            yes[a] = tree.nodes[static_cast<std::size_t>(up)].yes_child == child;
            if (up == 0) item_branch[i] = yes[a] ? 0 : 1;
            child = up;
        }
        for (std::size_t a = 0; a < p; ++a) {
            const bool draw = extra(rng);
            if (on_path[a] ? yes[a] : draw) ds.item_attributes[i].push_back(static_cast<AttributeId>(a));
        }
    }

    // Users lean towards one root subtree; this gives the interaction data collaborative structure.
    std::vector<std::vector<ItemId>> branch_items(2);
    for (std::size_t i = 0; i < spec.items; ++i) branch_items[static_cast<std::size_t>(item_branch[i])].push_back(static_cast<ItemId>(i));
    std::vector<int> user_home(spec.users);
    std::bernoulli_distribution coin(0.5);
    for (auto& h : user_home) h = coin(rng) ? 1 : 0;

    std::vector<UserId> user_of(spec.interactions);
    for (std::size_t k = 0; k < user_of.size(); ++k) user_of[k] = static_cast<UserId>(k % spec.users);
    std::shuffle(user_of.begin(), user_of.end(), rng);

    std::bernoulli_distribution at_home(spec.home_affinity);
    std::bernoulli_distribution keep(1.0 - spec.noise);
    std::set<std::pair<UserId, ItemId>> seen;
    for (UserId u : user_of) {
        ItemId item = 0;
        for (int attempt = 0; attempt < 16; ++attempt) {
            int branch = user_home[static_cast<std::size_t>(u)];
            if (!at_home(rng)) branch = 1 - branch;
            const auto& pool = branch_items[static_cast<std::size_t>(branch)].empty()
                                   ? branch_items[static_cast<std::size_t>(1 - branch)]
                                   : branch_items[static_cast<std::size_t>(branch)];
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            item = pool[pick(rng)];
            if (!seen.count({u, item})) break;
        }
        seen.insert({u, item});
        InteractionRecord r;
        r.user = u;
        r.item = item;
        r.mentions.assign(p, false);
        for (AttributeId a : ds.item_attributes[static_cast<std::size_t>(item)])
            if (keep(rng)) r.mentions[static_cast<std::size_t>(a)] = true;
        ds.interactions.push_back(std::move(r));
    }
    validate(ds);
    return out;
}

// --- splitting ---------------------------------------------------------------

DataSplit split_by_user(const Dataset& dataset, std::uint64_t seed) {
    const std::size_t m = dataset.num_users;
    if (m < 10) throw CorpusError("split_by_user needs at least 10 users, got " + std::to_string(m));
    std::vector<UserId> users(m);
    std::iota(users.begin(), users.end(), 0);
    Rng rng(seed);
    std::shuffle(users.begin(), users.end(), rng);

    const std::size_t n_train = m * 8 / 10;
    const std::size_t n_val = m / 10;
    DataSplit split;
    split.seed = seed;
    split.train_users.assign(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation_users.assign(users.begin() + static_cast<std::ptrdiff_t>(n_train),
                                  users.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test_users.assign(users.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), users.end());
    for (auto* part : {&split.train_users, &split.validation_users, &split.test_users}) std::sort(part->begin(), part->end());
    return split;
}

std::vector<InteractionRecord> records_of_users(const Dataset& dataset, const std::vector<UserId>& users) {
    std::vector<bool> member(dataset.num_users, false);
    for (UserId u : users) member.at(static_cast<std::size_t>(u)) = true;
    std::vector<InteractionRecord> out;
    for (const auto& r : dataset.interactions)
        if (static_cast<std::size_t>(r.user) < member.size() && member[static_cast<std::size_t>(r.user)]) out.push_back(r);
    return out;
}

}  // namespace factcrs
