#include "factcrs/forest.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <numeric>
#include <stdexcept>

#include "factcrs/random.hpp"

namespace factcrs {

std::size_t ForestConfig::resolved_f_max(std::size_t p) const {
    if (f_max != 0) return f_max;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(p))));
}

void ForestConfig::validate(std::size_t p) const {
    const std::size_t f = resolved_f_max(p);
    if (num_trees < 1) throw std::invalid_argument("num_trees must be >= 1");
    if (f < 1 || f > p) throw std::invalid_argument("f_max must lie in [1, p]");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
    if (max_turns < 1) throw std::invalid_argument("max_turns must be >= 1");
    if (alpha_p < 0 || alpha_n < 0) throw std::invalid_argument("alpha_p and alpha_n must be non-negative");
    optimizer.validate();
}

std::vector<AttributeId> draw_attribute_pool(std::size_t p, std::size_t f_max, std::uint64_t seed, std::size_t tree_index) {
    std::vector<AttributeId> all(p);
    std::iota(all.begin(), all.end(), 0);
    Rng rng(mix_seed(seed, 1000 + tree_index));
    auto pool = sample_without_replacement(std::move(all), f_max, rng);
    std::sort(pool.begin(), pool.end());
    return pool;
}

InteractionForest build_forest(const std::vector<InteractionRecord>& train_records, std::size_t num_items,
                               const AttributeVocabulary& vocabulary, const ForestConfig& config, ForestBuildLog* log) {
    if (train_records.empty()) throw std::invalid_argument("build_forest: no training records");
    const std::size_t p = vocabulary.size();
    config.validate(p);
    const std::size_t f_max = config.resolved_f_max(p);

    InteractionForest forest;
    forest.vocabulary = vocabulary;
    forest.config = config;
    forest.items = ItemEmbeddingTable::random(num_items, config.dim, config.optimizer.init_scale, mix_seed(config.seed, 1));
    const TrainingData data = make_training_data(train_records, num_items, config.optimizer.negatives_per_positive,
                                                 mix_seed(config.seed, 2));

    std::vector<std::vector<AttributeId>> pools;
    for (std::size_t j = 0; j < config.num_trees; ++j) pools.push_back(draw_attribute_pool(p, f_max, config.seed, j));
    std::vector<std::vector<SplitLogEntry>> splits(config.num_trees);
    forest.trees.resize(config.num_trees);

    forest.items.set_frozen(false);
    forest.trees[0] = build_tree(data, pools[0], forest.items, config.tree, config.optimizer, &splits[0]);

    if (config.joint_refinement) {
        for (std::size_t j = 1; j < config.num_trees; ++j)
            forest.trees[j] = build_tree(data, pools[j], forest.items, config.tree, config.optimizer, &splits[j]);
    } else {
        forest.items.set_frozen(true);
        const ItemEmbeddingTable& shared = forest.items;
        if (config.tree.threads <= 1) {
            for (std::size_t j = 1; j < config.num_trees; ++j)
                forest.trees[j] = build_tree(data, pools[j], shared, config.tree, config.optimizer, &splits[j]);
        } else {
            // Trees are independent given the frozen table; split evaluation stays sequential inside each.
            TreeConfig per_tree = config.tree;
            per_tree.threads = 1;
            std::vector<std::future<void>> jobs;
            const std::size_t workers = std::min(config.tree.threads, config.num_trees - 1);
            for (std::size_t w = 0; w < workers; ++w) {
                jobs.push_back(std::async(std::launch::async, [&, w] {
                    for (std::size_t j = 1 + w; j < config.num_trees; j += workers)
                        forest.trees[j] = build_tree(data, pools[j], shared, per_tree, config.optimizer, &splits[j]);
                }));
            }
            for (auto& job : jobs) job.get();
        }
    }
    forest.items.set_frozen(true);
    if (log) {
        log->pools = std::move(pools);
        log->splits = std::move(splits);
    }
    return forest;
}

// --- persistence -------------------------------------------------------------
//
// Layout: magic "FACTCRS1", u32 format version, then sections [u32 tag][u64 length][payload],
// terminated by the END tag, then u32 CRC-32 over every preceding byte. Integers and IEEE-754
// bit patterns are little-endian.

namespace {

constexpr char kMagic[8] = {'F', 'A', 'C', 'T', 'C', 'R', 'S', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kTagConfig = 1, kTagVocabulary = 2, kTagItems = 3, kTagTree = 4, kTagEnd = 0xFFFFFFFF;

class Writer {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void u64(std::uint64_t v) {
        for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    void vec(const Vector& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void section(std::uint32_t tag, const Writer& payload) {
        u32(tag);
        u64(payload.bytes.size());
        bytes.insert(bytes.end(), payload.bytes.begin(), payload.bytes.end());
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
    bool done() const { return pos_ == size_; }
    std::size_t remaining() const { return size_ - pos_; }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * k);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * k);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t count() {
        const std::uint64_t n = u64();
        if (n > remaining()) throw ModelFileError(ModelFileError::Kind::malformed, "model file: implausible element count");
        return static_cast<std::size_t>(n);
    }
    std::string str() {
        const std::size_t n = count();
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    Vector vec() {
        const std::size_t n = count();
        Vector v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    Reader sub(std::size_t n) {
        need(n);
        Reader r(data_ + pos_, n);
        pos_ += n;
        return r;
    }

private:
    void need(std::size_t n) const {
        if (n > size_ - pos_) throw ModelFileError(ModelFileError::Kind::truncated, "model file truncated");
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

void write_config(Writer& w, const ForestConfig& c) {
    w.u64(c.num_trees);
    w.u64(c.f_max);
    w.u64(c.seed);
    w.u64(c.dim);
    const auto& o = c.optimizer;
    w.f64(o.learning_rate);
    w.u64(o.epochs_search);
    w.u64(o.epochs_commit);
    w.u64(o.negatives_per_positive);
    w.f64(o.lambda_bpr);
    w.f64(o.lambda_s);
    w.f64(o.lambda_v);
    w.f64(o.init_scale);
    w.u8(o.search_trains_items ? 1 : 0);
    w.u64(c.tree.max_depth);
    w.f64(c.tree.gini_threshold);
    w.u64(c.tree.min_node);
    w.u64(c.tree.threads);
    w.u64(c.top_k);
    w.u64(c.max_turns);
    w.u64(c.eta);
    w.f64(c.alpha_p);
    w.f64(c.alpha_n);
    w.u8(c.joint_refinement ? 1 : 0);
    w.u8(c.exclude_rejected ? 1 : 0);
}

ForestConfig read_config(Reader& r) {
    ForestConfig c;
    c.num_trees = r.u64();
    c.f_max = r.u64();
    c.seed = r.u64();
    c.dim = r.u64();
    auto& o = c.optimizer;
    o.learning_rate = r.f64();
    o.epochs_search = r.u64();
    o.epochs_commit = r.u64();
    o.negatives_per_positive = r.u64();
    o.lambda_bpr = r.f64();
    o.lambda_s = r.f64();
    o.lambda_v = r.f64();
    o.init_scale = r.f64();
    o.search_trains_items = r.u8() != 0;
    c.tree.max_depth = r.u64();
    c.tree.gini_threshold = r.f64();
    c.tree.min_node = r.u64();
    c.tree.threads = r.u64();
    c.top_k = r.u64();
    c.max_turns = r.u64();
    c.eta = r.u64();
    c.alpha_p = r.f64();
    c.alpha_n = r.f64();
    c.joint_refinement = r.u8() != 0;
    c.exclude_rejected = r.u8() != 0;
    return c;
}

void write_tree(Writer& w, const InteractionTree& t) {
    w.u64(t.max_depth());
    w.u64(t.attribute_pool().size());
    for (AttributeId a : t.attribute_pool()) w.i32(a);
    w.u64(t.nodes().size());
    for (const auto& n : t.nodes()) {
        w.i32(n.id);
        w.i32(n.depth);
        w.i32(n.split_attribute ? *n.split_attribute : -1);
        w.i32(n.positive_child);
        w.i32(n.negative_child);
        w.vec(n.embedding);
        w.u64(n.interaction_count);
        w.u64(n.candidate_items.size());
        for (ItemId i : n.candidate_items) w.i32(i);
        w.f64(n.gini);
    }
}

InteractionTree read_tree(Reader& r) {
    const std::size_t max_depth = r.u64();
    std::vector<AttributeId> pool(r.count());
    for (auto& a : pool) a = r.i32();
    InteractionTree t(std::move(pool), max_depth);
    const std::size_t n_nodes = r.count();
    for (std::size_t k = 0; k < n_nodes; ++k) {
        TreeNode n;
        n.id = r.i32();
        n.depth = r.i32();
        const std::int32_t split = r.i32();
        if (split >= 0) n.split_attribute = split;
        n.positive_child = r.i32();
        n.negative_child = r.i32();
        n.embedding = r.vec();
        n.interaction_count = r.u64();
        n.candidate_items.resize(r.count());
        for (auto& i : n.candidate_items) i = r.i32();
        n.gini = r.f64();
        t.nodes().push_back(std::move(n));
    }
    return t;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const InteractionForest& forest) {
    Writer out;
    out.bytes.insert(out.bytes.end(), std::begin(kMagic), std::end(kMagic));
    out.u32(kVersion);

    Writer cfg;
    write_config(cfg, forest.config);
    out.section(kTagConfig, cfg);

    Writer vocab;
    vocab.u64(forest.vocabulary.size());
    for (const auto& name : forest.vocabulary.names()) vocab.str(name);
    out.section(kTagVocabulary, vocab);

    Writer items;
    items.u64(forest.items.size());
    items.u64(forest.items.dim());
    items.u8(forest.items.frozen() ? 1 : 0);
    for (double v : forest.items.values()) items.f64(v);
    out.section(kTagItems, items);

    for (const auto& tree : forest.trees) {
        Writer t;
        write_tree(t, tree);
        out.section(kTagTree, t);
    }
    out.section(kTagEnd, Writer{});

    const auto crc = crc32(0L, out.bytes.data(), static_cast<uInt>(out.bytes.size()));
    out.u32(static_cast<std::uint32_t>(crc));
    return out.bytes;
}

InteractionForest deserialize_model(const std::vector<std::uint8_t>& bytes) {
    using Kind = ModelFileError::Kind;
    if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw ModelFileError(Kind::version_mismatch, "not a model file of a supported version (bad magic)");
    Reader head(bytes.data() + sizeof(kMagic), 4);
    const std::uint32_t version = head.u32();
    if (version != kVersion)
        throw ModelFileError(Kind::version_mismatch, "model format version " + std::to_string(version) +
                                                         " (expected " + std::to_string(kVersion) + ")");

    // Walk section headers first so truncation is reported as such rather than as a bad checksum.
    const std::size_t body_start = sizeof(kMagic) + 4;
    Reader walk(bytes.data() + body_start, bytes.size() - body_start);
    while (true) {
        const std::uint32_t tag = walk.u32();
        const std::uint64_t len = walk.u64();
        if (len > walk.remaining()) throw ModelFileError(Kind::truncated, "model file truncated");
        walk.sub(static_cast<std::size_t>(len));
        if (tag == kTagEnd) break;
    }
    if (walk.remaining() < 4) throw ModelFileError(Kind::truncated, "model file truncated (missing checksum)");
    if (walk.remaining() > 4) throw ModelFileError(Kind::malformed, "trailing bytes after model checksum");
    const std::size_t crc_pos = bytes.size() - 4;
    Reader crc_reader(bytes.data() + crc_pos, 4);
    const std::uint32_t stored = crc_reader.u32();
    const auto actual = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(crc_pos)));
    if (stored != actual) throw ModelFileError(Kind::checksum, "model file checksum mismatch");

    InteractionForest forest;
    bool have_config = false, have_vocab = false, have_items = false;
    Reader body(bytes.data() + body_start, crc_pos - body_start);
    while (true) {
        const std::uint32_t tag = body.u32();
        Reader section = body.sub(static_cast<std::size_t>(body.u64()));
        if (tag == kTagEnd) break;
        switch (tag) {
            case kTagConfig:
                forest.config = read_config(section);
                have_config = true;
                break;
            case kTagVocabulary: {
                std::vector<std::string> names(section.count());
                for (auto& n : names) n = section.str();
                forest.vocabulary = AttributeVocabulary(std::move(names));
                have_vocab = true;
                break;
            }
            case kTagItems: {
                const std::size_t n = section.u64();
                const std::size_t d = section.u64();
                if (n * d * 8 > section.remaining()) throw ModelFileError(Kind::malformed, "item table size mismatch");
                forest.items = ItemEmbeddingTable(n, d);
                forest.items.set_frozen(section.u8() != 0);
                for (auto& v : forest.items.values()) v = section.f64();
                have_items = true;
                break;
            }
            case kTagTree:
                forest.trees.push_back(read_tree(section));
                break;
            default:
                throw ModelFileError(Kind::malformed, "unknown model section tag " + std::to_string(tag));
        }
    }
    if (!have_config || !have_vocab || !have_items || forest.trees.empty())
        throw ModelFileError(Kind::malformed, "model file is missing required sections");
    return forest;
}

void save_model(const InteractionForest& forest, const std::filesystem::path& path) {
    const auto bytes = serialize_model(forest);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelFileError(ModelFileError::Kind::io, "cannot write model file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelFileError(ModelFileError::Kind::io, "error writing model file " + path.string());
}

InteractionForest load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFileError(ModelFileError::Kind::io, "cannot open model file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace factcrs
