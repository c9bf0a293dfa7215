#include "factcrs/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "factcrs/random.hpp"

namespace factcrs {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// --- ItemEmbeddingTable ------------------------------------------------------

ItemEmbeddingTable::ItemEmbeddingTable(std::size_t items, std::size_t dim)
    : items_(items), dim_(dim), values_(items * dim, 0.0) {}

ItemEmbeddingTable ItemEmbeddingTable::random(std::size_t items, std::size_t dim, double scale, std::uint64_t seed) {
    ItemEmbeddingTable t(items, dim);
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& v : t.values_) v = u(rng);
    return t;
}

std::span<const double> ItemEmbeddingTable::row(ItemId item) const {
    if (item < 0 || static_cast<std::size_t>(item) >= items_) throw OptimizerError("item " + std::to_string(item) + " not in table");
    return {values_.data() + static_cast<std::size_t>(item) * dim_, dim_};
}

std::span<double> ItemEmbeddingTable::row(ItemId item) {
    if (item < 0 || static_cast<std::size_t>(item) >= items_) throw OptimizerError("item " + std::to_string(item) + " not in table");
    return {values_.data() + static_cast<std::size_t>(item) * dim_, dim_};
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw OptimizerError("learning_rate must be positive");
    if (lambda_bpr < 0 || lambda_s < 0 || lambda_v < 0 || init_scale < 0)
        throw OptimizerError("optimizer coefficients must be non-negative");
    if (epochs_search < 1 || epochs_commit < 1) throw OptimizerError("epoch counts must be >= 1");
}

// --- ItemGradient ------------------------------------------------------------

ItemGradient::ItemGradient(std::size_t items, std::size_t dim) : dim_(dim), slot_(items), rows_(items) {
    std::iota(slot_.begin(), slot_.end(), 0);
    std::iota(rows_.begin(), rows_.end(), 0);
    values_.assign(items * dim, 0.0);
}

ItemGradient::ItemGradient(std::size_t items, std::size_t dim, std::span<const ItemId> rows)
    : dim_(dim), slot_(items, -1) {
    for (ItemId r : rows) {
        auto& s = slot_.at(static_cast<std::size_t>(r));
        if (s < 0) {
            s = static_cast<int>(rows_.size());
            rows_.push_back(r);
        }
    }
    values_.assign(rows_.size() * dim, 0.0);
}

std::span<double> ItemGradient::row(ItemId item) {
    const int s = slot_.at(static_cast<std::size_t>(item));
    if (s < 0) throw OptimizerError("gradient row " + std::to_string(item) + " not tracked");
    return {values_.data() + static_cast<std::size_t>(s) * dim_, dim_};
}

std::span<const double> ItemGradient::row(ItemId item) const {
    const int s = slot_.at(static_cast<std::size_t>(item));
    if (s < 0) throw OptimizerError("gradient row " + std::to_string(item) + " not tracked");
    return {values_.data() + static_cast<std::size_t>(s) * dim_, dim_};
}

void ItemGradient::clear() { std::fill(values_.begin(), values_.end(), 0.0); }

// --- losses ------------------------------------------------------------------

namespace {

void check_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw OptimizerError(std::string("non-finite value in ") + what);
}

void check_negatives(ItemId target, std::span<const ItemId> negatives) {
    if (std::find(negatives.begin(), negatives.end(), target) != negatives.end())
        throw OptimizerError("negative sample set contains the target item " + std::to_string(target));
}

}  // namespace

double ce_loss(std::span<const double> s, const ItemEmbeddingTable& table, std::span<const ItemId> items) {
    double loss = 0.0;
    for (ItemId i : items) loss += softplus(-dot(s, table.row(i)));
    check_finite(loss, "cross-entropy loss");
    return loss;
}

double bpr_loss(std::span<const double> s, const ItemEmbeddingTable& table, ItemId target,
                std::span<const ItemId> negatives) {
    check_negatives(target, negatives);
    const double pos = dot(s, table.row(target));
    double loss = 0.0;
    for (ItemId j : negatives) loss += softplus(-(pos - dot(s, table.row(j))));
    check_finite(loss, "BPR loss");
    return loss;
}

double ce_loss_gradient(std::span<const double> s, const ItemEmbeddingTable& table, std::span<const ItemId> items,
                        std::span<double> grad_s, ItemGradient& grad_items) {
    const std::size_t d = s.size();
    double loss = 0.0;
    for (ItemId i : items) {
        const auto v = table.row(i);
        const double x = dot(s, v);
        loss += softplus(-x);
        const double g = -sigmoid(-x);  // d/dx softplus(-x)
        auto gv = grad_items.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            grad_s[k] += g * v[k];
            gv[k] += g * s[k];
        }
    }
    check_finite(loss, "cross-entropy loss");
    return loss;
}

double bpr_loss_gradient(std::span<const double> s, const ItemEmbeddingTable& table, ItemId target,
                         std::span<const ItemId> negatives, std::span<double> grad_s, ItemGradient& grad_items,
                         double weight) {
    check_negatives(target, negatives);
    const std::size_t d = s.size();
    const auto vi = table.row(target);
    const double pos = dot(s, vi);
    double loss = 0.0;
    for (ItemId j : negatives) {
        const auto vj = table.row(j);
        const double margin = pos - dot(s, vj);
        loss += softplus(-margin);
        const double g = -weight * sigmoid(-margin);
        auto gi = grad_items.row(target);
        auto gj = grad_items.row(j);
        for (std::size_t k = 0; k < d; ++k) {
            grad_s[k] += g * (vi[k] - vj[k]);
            gi[k] += g * s[k];
            gj[k] -= g * s[k];
        }
    }
    check_finite(loss, "BPR loss");
    return loss;
}

// --- negative sampling -------------------------------------------------------

NegativeSampler::NegativeSampler(std::size_t num_items, std::span<const InteractionRecord> records)
    : num_items_(num_items) {
    for (const auto& r : records) {
        const auto u = static_cast<std::size_t>(r.user);
        if (u >= user_items_.size()) user_items_.resize(u + 1);
        user_items_[u].push_back(r.item);
    }
    for (auto& items : user_items_) {
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
    }
}

bool NegativeSampler::interacted(UserId user, ItemId item) const {
    const auto u = static_cast<std::size_t>(user);
    if (u >= user_items_.size()) return false;
    return std::binary_search(user_items_[u].begin(), user_items_[u].end(), item);
}

std::vector<ItemId> NegativeSampler::sample(UserId user, ItemId target, std::size_t k, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<ItemId> out;
    if (k == 0) return out;
    const auto u = static_cast<std::size_t>(user);
    const std::size_t seen = u < user_items_.size() ? user_items_[u].size() : 0;
    // The target counts as interacted even when it is absent from the sampler's records.
    const bool target_extra = !interacted(user, target);
    const std::size_t available = num_items_ - seen - (target_extra ? 1 : 0);

    if (available <= 4 * k) {
        std::vector<ItemId> pool;
        pool.reserve(available);
        for (std::size_t i = 0; i < num_items_; ++i) {
            const auto item = static_cast<ItemId>(i);
            if (item != target && !interacted(user, item)) pool.push_back(item);
        }
        return sample_without_replacement(std::move(pool), k, rng);
    }
    // Sparse users: rejection sampling is uniform without replacement over the same pool.
    std::uniform_int_distribution<std::size_t> pick(0, num_items_ - 1);
    while (out.size() < k) {
        const auto item = static_cast<ItemId>(pick(rng));
        if (item == target || interacted(user, item)) continue;
        if (std::find(out.begin(), out.end(), item) != out.end()) continue;
        out.push_back(item);
    }
    return out;
}

std::vector<ItemId> sample_negatives(const Dataset& dataset, const InteractionRecord& record, std::size_t k,
                                     std::uint64_t seed) {
    NegativeSampler sampler(dataset.num_items, dataset.interactions);
    return sampler.sample(record.user, record.item, k, seed);
}

// --- partition fitting -------------------------------------------------------

namespace {

struct Touched {
    std::vector<ItemId> items;       // unique, ascending
    std::vector<double> term_count;  // per touched item, aligned with `items`
};

Touched touched_rows(std::size_t num_items, std::span<const RecordRef> pos, std::span<const RecordRef> neg) {
    std::vector<double> count(num_items, 0.0);
    for (auto part : {pos, neg}) {
        for (const auto& r : part) {
            count[static_cast<std::size_t>(r.item)] += 1.0;
            for (ItemId j : r.negatives) count[static_cast<std::size_t>(j)] += 1.0;
        }
    }
    Touched t;
    for (std::size_t i = 0; i < num_items; ++i) {
        if (count[i] > 0.0) {
            t.items.push_back(static_cast<ItemId>(i));
            t.term_count.push_back(count[i]);
        }
    }
    return t;
}

double regularizer_v(const ItemEmbeddingTable& table, std::span<const ItemId> rows) {
    double acc = 0.0;
    for (ItemId i : rows) {
        const auto v = table.row(i);
        acc += dot(v, v);
    }
    return acc;
}

double side_loss_gradient(std::span<const double> s, const ItemEmbeddingTable& table, std::span<const RecordRef> part,
                          const OptimizerConfig& config, std::span<double> grad_s, ItemGradient& grad_items) {
    double loss = 0.0;
    for (const auto& r : part) {
        const ItemId one[] = {r.item};
        loss += ce_loss_gradient(s, table, one, grad_s, grad_items);
        if (config.lambda_bpr > 0.0 && !r.negatives.empty())
            loss += config.lambda_bpr *
                    bpr_loss_gradient(s, table, r.item, r.negatives, grad_s, grad_items, config.lambda_bpr);
    }
    loss += config.lambda_s * dot(s, s);
    for (std::size_t k = 0; k < s.size(); ++k) grad_s[k] += 2.0 * config.lambda_s * s[k];
    return loss;
}

}  // namespace

double partition_objective(std::span<const double> s_pos, std::span<const double> s_neg, const ItemEmbeddingTable& table,
                           std::span<const RecordRef> pos, std::span<const RecordRef> neg, const OptimizerConfig& config) {
    double total = 0.0;
    auto side = [&](std::span<const double> s, std::span<const RecordRef> part) {
        for (const auto& r : part) {
            const ItemId one[] = {r.item};
            total += ce_loss(s, table, one);
            total += config.lambda_bpr * bpr_loss(s, table, r.item, r.negatives);
        }
        total += config.lambda_s * dot(s, s);
    };
    side(s_pos, pos);
    side(s_neg, neg);
    total += config.lambda_v * regularizer_v(table, touched_rows(table.size(), pos, neg).items);
    return total;
}

namespace {

PartitionFit fit_impl(std::span<const RecordRef> pos, std::span<const RecordRef> neg, const ItemEmbeddingTable& table,
                      ItemEmbeddingTable* writable, const OptimizerConfig& config, std::size_t epochs) {
    const std::size_t d = table.dim();
    PartitionFit fit{Vector(d, 0.0), Vector(d, 0.0), 0.0, 0.0};
    if (pos.empty() && neg.empty()) return fit;

    const Touched touched = touched_rows(table.size(), pos, neg);
    const bool train_items = writable != nullptr;
    const double step_pos = config.learning_rate / std::max<double>(1.0, static_cast<double>(pos.size()));
    const double step_neg = config.learning_rate / std::max<double>(1.0, static_cast<double>(neg.size()));

    Vector s_pos(d, 0.0), s_neg(d, 0.0);
    Vector grad_pos(d), grad_neg(d);
    ItemGradient grad_items(table.size(), d, touched.items);

    std::vector<double> best_rows;
    auto snapshot_rows = [&] {
        if (!train_items) return;
        best_rows.clear();
        for (ItemId i : touched.items) {
            auto v = writable->row(i);
            best_rows.insert(best_rows.end(), v.begin(), v.end());
        }
    };

    double best = 0.0;
    for (std::size_t epoch = 0; epoch <= epochs; ++epoch) {
        std::fill(grad_pos.begin(), grad_pos.end(), 0.0);
        std::fill(grad_neg.begin(), grad_neg.end(), 0.0);
        grad_items.clear();

        double objective = 0.0;
        try {
            if (!pos.empty()) objective += side_loss_gradient(s_pos, table, pos, config, grad_pos, grad_items);
            if (!neg.empty()) objective += side_loss_gradient(s_neg, table, neg, config, grad_neg, grad_items);
        } catch (const OptimizerError& e) {
            throw OptimizerError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " (learning rate too high?)");
        }
        objective += config.lambda_v * regularizer_v(table, touched.items);
        if (!std::isfinite(objective))
            throw OptimizerError("non-finite objective at epoch " + std::to_string(epoch) + " (learning rate too high?)");

        if (epoch == 0) fit.initial_objective = objective;
        if (epoch == 0 || objective < best) {
            best = objective;
            fit.s_pos = s_pos;
            fit.s_neg = s_neg;
            snapshot_rows();
        }
        if (epoch == epochs) break;

        if (!pos.empty())
            for (std::size_t k = 0; k < d; ++k) s_pos[k] -= step_pos * grad_pos[k];
        if (!neg.empty())
            for (std::size_t k = 0; k < d; ++k) s_neg[k] -= step_neg * grad_neg[k];
        if (train_items) {
            for (std::size_t t = 0; t < touched.items.size(); ++t) {
                const ItemId i = touched.items[t];
                auto v = writable->row(i);
                auto g = grad_items.row(i);
                const double step = config.learning_rate / touched.term_count[t];
                for (std::size_t k = 0; k < d; ++k) v[k] -= step * (g[k] + 2.0 * config.lambda_v * v[k]);
            }
        }
    }

    if (train_items) {
        for (std::size_t t = 0; t < touched.items.size(); ++t) {
            auto v = writable->row(touched.items[t]);
            std::copy_n(best_rows.begin() + static_cast<std::ptrdiff_t>(t * d), d, v.begin());
        }
    }
    fit.objective = best;
    return fit;
}

}  // namespace

PartitionFit fit_partition_embeddings(std::span<const RecordRef> pos, std::span<const RecordRef> neg,
                                      ItemEmbeddingTable& table, const OptimizerConfig& config, std::size_t epochs) {
    return fit_impl(pos, neg, table, table.frozen() ? nullptr : &table, config, epochs);
}

PartitionFit fit_partition_embeddings(std::span<const RecordRef> pos, std::span<const RecordRef> neg,
                                      const ItemEmbeddingTable& table, const OptimizerConfig& config, std::size_t epochs) {
    return fit_impl(pos, neg, table, nullptr, config, epochs);
}

}  // namespace factcrs
