#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unmask/error.hpp"
#include "unmask/info.hpp"
#include "unmask/rng.hpp"
#include "unmask/sched.hpp"

/// Exhaustive ground truth for small instances: sampled laws, expected KL, prediction error.
namespace unmask::oracle {

using info::Assignment;
using info::IndexSet;
using info::TabularDist;
using sched::CoeffTable;
using sched::ScheduleRealization;
using sched::SchemeKind;

inline constexpr double kDefaultEnumerationCap = 1e7;
inline constexpr double kDefaultFloor = 1e-9;

/**
 * Mask predictor (position, revealed context) -> distribution over the alphabet.
 *
 * Exact returns the true conditional marginal p*_i(. | ctx). At a context of
 * probability zero the true conditional is undefined and Exact returns the
 * uniform law; such contexts never carry weight in any expectation.
 *
 * Perturbed multiplies the exact conditional by exp(noise_scale * g) with g
 * standard normal, floors at `floor`, and renormalizes. The noise for a given
 * (position, context, symbol) is a fixed function of the seed, so answers do
 * not depend on query order.
 *
 * Answers are memoized; one instance must not be queried from several threads.
 */
class MaskPredictor {
public:
    static MaskPredictor exact(const TabularDist& source) { return MaskPredictor(source, false, 0.0, 0.0, 0); }

    static MaskPredictor perturbed(const TabularDist& source, double noise_scale, std::uint64_t seed,
                                   double floor = kDefaultFloor) {
        if (!(floor > 0.0) || noise_scale < 0.0) {
            throw ArityError("perturbed predictor needs floor > 0 and noise_scale >= 0");
        }
        return MaskPredictor(source, true, noise_scale, floor, seed);
    }

    const TabularDist& source() const { return *source_; }
    bool is_exact() const { return !perturbed_; }

    /// Distribution of X_i given the context (i must not be revealed by ctx).
    std::vector<double> query(int i, const Assignment& ctx) const {
        info::check_assignment(*source_, ctx);
        if (i < 0 || i >= source_->length()) {
            throw ArityError("query: position out of range");
        }
        std::vector<int> x(source_->length(), 0);
        std::uint64_t mask = 0;
        for (std::size_t k = 0; k < ctx.positions.size(); ++k) {
            if (ctx.positions[k] == i) {
                throw ArityError("query: position is part of its own context");
            }
            mask |= std::uint64_t{1} << ctx.positions[k];
            x[ctx.positions[k]] = ctx.values[k];
        }
        return lookup(i, mask, x);
    }

    /**
     * Same as query, with the context given as a bitmask of revealed positions
     * over a full-length sequence x (entries outside the mask are ignored).
     */
    const std::vector<double>& lookup(int i, std::uint64_t mask, const std::vector<int>& x) const {
        std::uint64_t code = 0;
        for (int p = source_->length() - 1; p >= 0; --p) {
            code = code * static_cast<std::uint64_t>(source_->q()) +
                   (((mask >> p) & 1u) ? static_cast<std::uint64_t>(x[p]) : 0u);
        }
        const std::uint64_t key =
            (static_cast<std::uint64_t>(i) * (std::uint64_t{1} << source_->length()) + mask) * source_->size() + code;
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            return it->second;
        }
        std::vector<double> out = exact_conditional(i, mask, x);
        if (perturbed_) {
            CounterRng rng(seed_, key);
            double total = 0.0;
            for (double& v : out) {
                v = std::max(v * std::exp(noise_scale_ * rng.normal()), floor_);
                total += v;
            }
            for (double& v : out) {
                v /= total;
            }
        }
        return cache_.emplace(key, std::move(out)).first->second;
    }

private:
    MaskPredictor(const TabularDist& source, bool perturbed, double noise_scale, double floor, std::uint64_t seed)
        : source_(&source), perturbed_(perturbed), noise_scale_(noise_scale), floor_(floor), seed_(seed) {
        if (source.length() > 24) {
            throw CapacityError("mask predictor supports at most 24 positions");
        }
    }

    std::vector<double> exact_conditional(int i, std::uint64_t mask, const std::vector<int>& ctx_x) const {
        const int q = source_->q();
        std::vector<double> w(q, 0.0);
        info::detail::for_each_entry(*source_, [&](std::size_t idx, const std::vector<int>& x) {
            const double p = (*source_)[idx];
            if (p == 0.0) {
                return;
            }
            for (int pos = 0; pos < source_->length(); ++pos) {
                if (((mask >> pos) & 1u) && x[pos] != ctx_x[pos]) {
                    return;
                }
            }
            w[x[i]] += p;
        });
        const double mass = std::accumulate(w.begin(), w.end(), 0.0);
        if (!(mass > 0.0)) {
            return std::vector<double>(q, 1.0 / q);
        }
        for (double& v : w) {
            v /= mass;
        }
        return w;
    }

    const TabularDist* source_;
    bool perturbed_;
    double noise_scale_;
    double floor_;
    std::uint64_t seed_;
    mutable std::unordered_map<std::uint64_t, std::vector<double>> cache_;
};

// ---------------------------------------------------------------------------
// KL divergence

struct KlResult {
    double value = 0.0;  ///< nats; meaningful only when finite
    bool infinite = false;

    double or_inf() const { return infinite ? std::numeric_limits<double>::infinity() : value; }
};

/// KL(p || r) over two probability vectors of equal length.
inline KlResult kl(const std::vector<double>& p, const std::vector<double>& r) {
    if (p.size() != r.size()) {
        throw ArityError("kl: distributions have different sizes");
    }
    KlResult res;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] == 0.0) {
            continue;
        }
        if (r[k] == 0.0) {
            res.infinite = true;
            continue;
        }
        res.value += p[k] * std::log(p[k] / r[k]);
    }
    return res;
}

inline KlResult kl(const TabularDist& p, const TabularDist& r) {
    if (p.q() != r.q() || p.length() != r.length()) {
        throw ArityError("kl: distributions have different shapes");
    }
    return kl(p.probs(), r.probs());
}

// ---------------------------------------------------------------------------
// Sampled laws

namespace detail {

inline std::uint64_t mask_of(const IndexSet& s) {
    std::uint64_t m = 0;
    for (int i : s) m |= std::uint64_t{1} << i;
    return m;
}

inline IndexSet complement(const IndexSet& s, int length) {
    return info::detail::set_minus(info::all_positions(length), s);
}

}  // namespace detail

/**
 * Law of the sampler's output on the target positions of `real` (sorted order,
 * first position = lowest digit), given the revealed context ctx: every step
 * draws its positions independently from pred conditioned on ctx plus all
 * earlier steps.
 */
inline std::vector<double> sampled_conditional(const ScheduleRealization& real, const MaskPredictor& pred,
                                               const Assignment& ctx) {
    const TabularDist& dist = pred.source();
    const int q = dist.q();
    const IndexSet& target = real.target;
    const std::size_t n = info::checked_table_size(q, static_cast<int>(target.size()));
    std::vector<std::uint64_t> before(real.steps.size());
    std::uint64_t acc = detail::mask_of(ctx.positions);
    for (std::size_t k = 0; k < real.steps.size(); ++k) {
        before[k] = acc;
        for (int i : real.steps[k]) acc |= std::uint64_t{1} << i;
    }
    std::vector<int> x(dist.length(), 0);
    for (std::size_t k = 0; k < ctx.positions.size(); ++k) x[ctx.positions[k]] = ctx.values[k];
    std::vector<double> out(n, 0.0);
    std::vector<int> digits(target.size(), 0);
    for (std::size_t idx = 0; idx < n; ++idx) {
        for (std::size_t t = 0; t < target.size(); ++t) x[target[t]] = digits[t];
        double prob = 1.0;
        for (std::size_t k = 0; k < real.steps.size() && prob > 0.0; ++k) {
            for (int i : real.steps[k]) {
                prob *= pred.lookup(i, before[k], x)[x[i]];
            }
        }
        out[idx] = prob;
        for (std::size_t t = 0; t < digits.size(); ++t) {
            if (++digits[t] < q) break;
            digits[t] = 0;
        }
    }
    return out;
}

/// p_{Y_out^S}: the sampler's output law over all L positions for one realization covering [L].
inline TabularDist sampled_distribution(const ScheduleRealization& real, const MaskPredictor& pred) {
    const TabularDist& dist = pred.source();
    if (real.target != info::all_positions(dist.length()) || !real.is_partition()) {
        throw ArityError("sampled_distribution: realization must partition all positions");
    }
    std::vector<double> probs = sampled_conditional(real, pred, Assignment{});
    return TabularDist::from_weights(dist.q(), dist.length(), std::move(probs));
}

/// KL between the joint conditional of X_S given ctx and the product of its conditional marginals.
inline double single_batch_kl(const TabularDist& dist, const Assignment& ctx, const IndexSet& s) {
    const TabularDist joint = info::conditional(dist, s, ctx);
    std::vector<std::vector<double>> margins;
    for (std::size_t k = 0; k < s.size(); ++k) {
        margins.push_back(info::marginal(joint, {static_cast<int>(k)}).probs());
    }
    const TabularDist product = info::make_product_dist(margins);
    return kl(joint, product).value;
}

// ---------------------------------------------------------------------------
// Schedule laws

/// Size law of one scheme: adaptive (table-backed) or the fixed-size baseline.
class ScheduleLaw {
public:
    static ScheduleLaw adaptive(const CoeffTable& table) { return ScheduleLaw(&table); }
    static ScheduleLaw fixed() { return ScheduleLaw(nullptr); }

    SchemeKind kind() const { return table_ ? table_->kind() : SchemeKind::FixedUniform; }
    const CoeffTable* table() const { return table_; }

    /**
     * (size, probability) pairs for the first step of a K-step schedule on n
     * positions. `fixed_sizes` is consulted only by the fixed baseline.
     */
    std::vector<std::pair<int, double>> first_step(int k, int n, const std::vector<int>& fixed_sizes,
                                                   std::size_t step) const {
        if (!table_) {
            return {{fixed_sizes[step], 1.0}};
        }
        const std::vector<double> pmf = sched::batch_size_pmf(*table_, k, n);
        std::vector<std::pair<int, double>> out;
        for (std::size_t l = 0; l < pmf.size(); ++l) {
            if (pmf[l] > 0.0) out.emplace_back(static_cast<int>(l) + 1, pmf[l]);
        }
        return out;
    }

private:
    explicit ScheduleLaw(const CoeffTable* table) : table_(table) {}
    const CoeffTable* table_;
};

namespace detail {

inline double binomial(int n, int k) {
    double c = 1.0;
    for (int j = 1; j <= k; ++j) c = c * (n - k + j) / j;
    return c;
}

/// Visits each l-subset of `pool` (lexicographic in index order).
template <typename Fn>
void for_each_subset(const std::vector<int>& pool, int l, Fn&& fn) {
    const int n = static_cast<int>(pool.size());
    std::vector<int> idx(l);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> subset(l);
    while (true) {
        for (int t = 0; t < l; ++t) subset[t] = pool[idx[t]];
        fn(subset);
        int t = l - 1;
        while (t >= 0 && idx[t] == n - l + t) --t;
        if (t < 0) return;
        ++idx[t];
        for (int u = t + 1; u < l; ++u) idx[u] = idx[u - 1] + 1;
    }
}

}  // namespace detail

/// Number of realizations with positive probability, computed without enumerating.
inline double count_realizations(const ScheduleLaw& law, int k, int n) {
    if (law.kind() == SchemeKind::FixedUniform) {
        double count = 1.0;
        int remaining = n;
        for (int l : sched::fixed_uniform_sizes(k, n)) {
            count *= detail::binomial(remaining, l);
            remaining -= l;
        }
        return count;
    }
    // N(k, m) = sum_l C(m, l) N(k-1, m-l) with N(1, m) = 1.
    std::vector<double> prev(n + 1, 1.0);
    for (int kk = 2; kk <= k; ++kk) {
        std::vector<double> cur(n + 1, 0.0);
        for (int m = kk; m <= n; ++m) {
            for (int l = 1; l <= m - kk + 1; ++l) cur[m] += detail::binomial(m, l) * prev[m - l];
        }
        prev = std::move(cur);
    }
    return prev[n];
}

/**
 * Visits every realization of the scheme on index set `target` with K steps,
 * together with its probability. Mirrors the generative description: draw the
 * first size, then a uniform subset, then recurse on the rest.
 */
template <typename Fn>
void for_each_realization(const ScheduleLaw& law, int k, const IndexSet& target, Fn&& fn,
                          double cap = kDefaultEnumerationCap) {
    const int n = static_cast<int>(target.size());
    if (k < 1 || k > n) {
        throw InfeasibleError("enumeration needs 1 <= K <= |I|");
    }
    if (law.table()) {
        law.table()->require(k, n);
    }
    const double count = count_realizations(law, k, n);
    if (count > cap) {
        throw CapacityError("schedule enumeration would visit " + std::to_string(count) +
                            " realizations (cap " + std::to_string(cap) + ")");
    }
    const std::vector<int> fixed_sizes =
        law.kind() == SchemeKind::FixedUniform ? sched::fixed_uniform_sizes(k, n) : std::vector<int>{};
    ScheduleRealization real;
    real.target = target;
    std::sort(real.target.begin(), real.target.end());
    std::function<void(int, const std::vector<int>&, double)> rec = [&](int k_left, const std::vector<int>& pool,
                                                                        double prob) {
        if (pool.empty()) {
            fn(static_cast<const ScheduleRealization&>(real), prob);
            return;
        }
        const std::size_t step = real.steps.size();
        for (const auto& [l, pl] : law.first_step(k_left, static_cast<int>(pool.size()), fixed_sizes, step)) {
            const double p_subset = pl / detail::binomial(static_cast<int>(pool.size()), l);
            detail::for_each_subset(pool, l, [&](const std::vector<int>& subset) {
                std::vector<int> rest;
                std::set_difference(pool.begin(), pool.end(), subset.begin(), subset.end(), std::back_inserter(rest));
                real.steps.push_back(subset);
                rec(k_left - 1, rest, prob * p_subset);
                real.steps.pop_back();
            });
        }
    };
    rec(k, real.target, 1.0);
}

inline std::vector<std::pair<ScheduleRealization, double>> enumerate_schedule_law(
    const ScheduleLaw& law, int k, const IndexSet& target, double cap = kDefaultEnumerationCap) {
    std::vector<std::pair<ScheduleRealization, double>> out;
    for_each_realization(
        law, k, target, [&](const ScheduleRealization& r, double p) { out.emplace_back(r, p); }, cap);
    return out;
}

// ---------------------------------------------------------------------------
// Expected KL

/**
 * E_{S ~ pi(K, I)} KL(p_{X_I | ctx} || p_{Y_I^S | ctx}) with I the complement
 * of ctx.positions. ctx must have positive probability.
 */
inline double expected_kl_conditional(const ScheduleLaw& law, int k, const Assignment& ctx, const MaskPredictor& pred,
                                      double cap = kDefaultEnumerationCap) {
    const TabularDist& dist = pred.source();
    const IndexSet target = detail::complement(ctx.positions, dist.length());
    const TabularDist truth = info::conditional(dist, target, ctx);
    double total = 0.0;
    bool infinite = false;
    for_each_realization(
        law, k, target,
        [&](const ScheduleRealization& real, double prob) {
            const KlResult r = kl(truth.probs(), sampled_conditional(real, pred, ctx));
            infinite = infinite || r.infinite;
            total += prob * r.value;
        },
        cap);
    return infinite ? std::numeric_limits<double>::infinity() : total;
}

/// E_{S ~ pi(K, [L])} KL(p_data || p_{Y_out^S}).
inline double expected_kl(const ScheduleLaw& law, int k, const MaskPredictor& pred,
                          double cap = kDefaultEnumerationCap) {
    return expected_kl_conditional(law, k, Assignment{}, pred, cap);
}

/**
 * Prediction error of `pred` under the scheme, per-step form:
 * E_S sum_k sum_{i in S_k} E_x log(p*_i / p^_i)(x_i | x_{U_{k-1}}).
 */
inline double prediction_error(const ScheduleLaw& law, int k, const MaskPredictor& pred,
                               double cap = kDefaultEnumerationCap) {
    const TabularDist& dist = pred.source();
    const MaskPredictor truth = MaskPredictor::exact(dist);
    double total = 0.0;
    for_each_realization(
        law, k, info::all_positions(dist.length()),
        [&](const ScheduleRealization& real, double prob) {
            double sum = 0.0;
            info::detail::for_each_entry(dist, [&](std::size_t idx, const std::vector<int>& x) {
                const double px = dist[idx];
                if (px == 0.0) return;
                std::uint64_t before = 0;
                for (const auto& step : real.steps) {
                    for (int i : step) {
                        sum += px * std::log(truth.lookup(i, before, x)[x[i]] / pred.lookup(i, before, x)[x[i]]);
                    }
                    before |= detail::mask_of(step);
                }
            });
            total += prob * sum;
        },
        cap);
    return total;
}

/**
 * Prediction error in the masked-set weighting form: with tau drawn as
 * P{tau = k | S} = |S_k| / L, average (L / |M_tau|) sum_{i in M_tau} log(p*_i / p^_i)
 * where M_tau is the set still masked before step tau. Agrees with
 * prediction_error whenever each step is a uniform subset of the masked set.
 */
inline double prediction_error_masked(const ScheduleLaw& law, int k, const MaskPredictor& pred,
                                      double cap = kDefaultEnumerationCap) {
    const TabularDist& dist = pred.source();
    const MaskPredictor truth = MaskPredictor::exact(dist);
    double total = 0.0;
    for_each_realization(
        law, k, info::all_positions(dist.length()),
        [&](const ScheduleRealization& real, double prob) {
            double sum = 0.0;
            info::detail::for_each_entry(dist, [&](std::size_t idx, const std::vector<int>& x) {
                const double px = dist[idx];
                if (px == 0.0) return;
                std::uint64_t before = 0;
                std::size_t masked = dist.length();
                for (const auto& step : real.steps) {
                    const double weight = static_cast<double>(step.size()) / static_cast<double>(masked);
                    for (int i = 0; i < dist.length(); ++i) {
                        if ((before >> i) & 1u) continue;
                        sum += px * weight *
                               std::log(truth.lookup(i, before, x)[x[i]] / pred.lookup(i, before, x)[x[i]]);
                    }
                    before |= detail::mask_of(step);
                    masked -= step.size();
                }
            });
            total += prob * sum;
        },
        cap);
    return total;
}

struct RecursionResult {
    double lhs = 0.0;
    double first_batch = 0.0;  ///< E_{S1} KL of the first batch against the product of predicted marginals
    double recursive = 0.0;    ///< E_{S1, x_S1} of the (K-1)-step expected KL on the rest
    double residual() const { return std::abs(lhs - (first_batch + recursive)); }
};

/**
 * One-step decomposition of the expected KL of an adaptive scheme at context
 * ctx, with each side computed by its own enumeration.
 */
inline RecursionResult recursion_check(const ScheduleLaw& law, int k, const Assignment& ctx, const MaskPredictor& pred,
                                       double cap = kDefaultEnumerationCap) {
    if (law.kind() == SchemeKind::FixedUniform) {
        throw ArityError("recursion_check applies to the adaptive schemes only");
    }
    if (k < 2) {
        throw InfeasibleError("recursion_check needs K >= 2");
    }
    const TabularDist& dist = pred.source();
    const IndexSet target = detail::complement(ctx.positions, dist.length());
    RecursionResult res;
    res.lhs = expected_kl_conditional(law, k, ctx, pred, cap);
    const int n = static_cast<int>(target.size());
    const std::vector<double> pmf = sched::batch_size_pmf(*law.table(), k, n);
    for (int l = 1; l <= static_cast<int>(pmf.size()); ++l) {
        if (pmf[l - 1] == 0.0) continue;
        const double p_subset = pmf[l - 1] / detail::binomial(n, l);
        detail::for_each_subset(target, l, [&](const std::vector<int>& s1) {
            // First batch: joint conditional of X_S1 versus the product of predicted marginals.
            const TabularDist joint = info::conditional(dist, s1, ctx);
            ScheduleRealization one;
            one.target = s1;
            one.steps = {s1};
            res.first_batch += p_subset * kl(joint.probs(), sampled_conditional(one, pred, ctx)).value;
            // Remaining K-1 steps at every continuation of the context.
            info::detail::for_each_entry(joint, [&](std::size_t idx, const std::vector<int>& y) {
                const double py = joint[idx];
                if (py == 0.0) return;
                Assignment next = ctx;
                for (std::size_t t = 0; t < s1.size(); ++t) {
                    next.positions.push_back(s1[t]);
                    next.values.push_back(y[t]);
                }
                std::vector<std::size_t> order(next.positions.size());
                std::iota(order.begin(), order.end(), 0);
                std::sort(order.begin(), order.end(),
                          [&](std::size_t a, std::size_t b) { return next.positions[a] < next.positions[b]; });
                Assignment sorted;
                for (std::size_t o : order) {
                    sorted.positions.push_back(next.positions[o]);
                    sorted.values.push_back(next.values[o]);
                }
                res.recursive += p_subset * py * expected_kl_conditional(law, k - 1, sorted, pred, cap);
            });
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Coefficient cross-checks

/**
 * log Psi(K, L') as log-sum-exp over the batch-size weights w_l, each written
 * as the product of its factors for i = 1..l-1, from the f values of row K-1
 * only. Does not touch the table's stored ratios or log Psi.
 */
inline double direct_log_psi(const CoeffTable& table, int k, int lp) {
    table.require(k, lp);
    if (k < 2) {
        throw InfeasibleError("direct_log_psi needs K >= 2");
    }
    const double L = table.ambient_length();
    const bool tc = table.kind() == SchemeKind::TcAdaptive;
    std::vector<double> log_w{0.0};
    double lw = 0.0;
    for (int i = 1; i <= lp - k; ++i) {
        double num = 0.0;
        double den = 0.0;
        if (tc) {
            num = (lp - i) * table.f(k - 1, lp - i);
            den = 1.0 + (lp - i - 2) * table.f(k - 1, lp - i - 1);
        } else {
            num = (L - lp + i) * table.f(k - 1, lp - i);
            den = 1.0 + (L - lp + i + 2) * table.f(k - 1, lp - i - 1);
        }
        lw += std::log(num) - std::log(den);
        log_w.push_back(lw);
    }
    const double top = *std::max_element(log_w.begin(), log_w.end());
    double s = 0.0;
    for (double v : log_w) s += std::exp(v - top);
    return top + std::log(s);
}

/// Upper bound for the DTC scheme at context ctx: f(K,|I|) [((L-|I|)/|I|) TC + (L/|I|) DTC] of the conditional law.
inline double dtc_conditional_bound(const CoeffTable& table, int k, const TabularDist& dist, const Assignment& ctx) {
    const IndexSet target = detail::complement(ctx.positions, dist.length());
    const TabularDist cond = info::conditional(dist, target, ctx);
    const double n = static_cast<double>(target.size());
    const double L = dist.length();
    return table.f(k, static_cast<int>(target.size())) *
           ((L - n) / n * info::total_correlation(cond) + L / n * info::dual_total_correlation(cond));
}

}  // namespace unmask::oracle
