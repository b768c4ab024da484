#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unmask/error.hpp"
#include "unmask/rng.hpp"

/// Randomized unmasking schedules and their coefficient tables.
namespace unmask::sched {

enum class SchemeKind { TcAdaptive, DtcAdaptive, FixedUniform };

inline std::string_view to_string(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::TcAdaptive: return "tc";
        case SchemeKind::DtcAdaptive: return "dtc";
        case SchemeKind::FixedUniform: return "fixed";
    }
    return "?";
}

inline SchemeKind parse_scheme(std::string_view name) {
    if (name == "tc") return SchemeKind::TcAdaptive;
    if (name == "dtc") return SchemeKind::DtcAdaptive;
    if (name == "fixed") return SchemeKind::FixedUniform;
    throw ArityError("unknown scheme '" + std::string(name) + "' (expected tc, dtc or fixed)");
}

/// H_n = sum_{i=1..n} 1/i, with H_0 = 0.
inline double harmonic(int n) {
    double h = 0.0;
    for (int i = n; i >= 1; --i) {
        h += 1.0 / i;
    }
    return h;
}

/// H_0..H_n.
inline std::vector<double> harmonic_table(int n) {
    std::vector<double> h(static_cast<std::size_t>(std::max(n, 0)) + 1, 0.0);
    for (int i = 1; i <= n; ++i) {
        h[i] = h[i - 1] + 1.0 / i;
    }
    return h;
}

/// log(exp(a) + exp(b)).
inline double logaddexp(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log1p(std::exp(b - a));
}

/// Coefficients within this distance below zero are rounding noise and clamp to 0.
inline constexpr double kNegativeTolerance = 1e-12;

/**
 * Precomputed coefficients f(K, L') and normalizers log Psi(K, L') for one
 * adaptive scheme, on the region 1 <= K <= K_max, K <= L' <= ambient_L.
 *
 * The batch-size weights satisfy w_1 = 1 and w_{l+1} / w_l = ratio(K, L' - l),
 * so the table also stores that ratio for every (K, m). Psi is accumulated in
 * log space through the recurrence Psi(K, L') = 1 + ratio(K, L'-1) Psi(K, L'-1)
 * with Psi(K, K) = 1, giving O(1) work per cell.
 *
 * A DTC table depends on ambient_L through its base row and is only valid for
 * sequences of that length. Immutable after construction.
 */
class CoeffTable {
public:
    CoeffTable(SchemeKind kind, int ambient_length, int max_steps, double base_scale = 1.0)
        : kind_(kind), length_(ambient_length), max_steps_(max_steps) {
        if (kind == SchemeKind::FixedUniform) {
            throw ArityError("the fixed-size scheme has no coefficient table");
        }
        if (ambient_length < 1 || max_steps < 1) {
            throw InfeasibleError("coefficient table needs L >= 1 and K_max >= 1");
        }
        if (max_steps > ambient_length) {
            throw InfeasibleError("K_max = " + std::to_string(max_steps) + " exceeds L = " +
                                  std::to_string(ambient_length));
        }
        row_offset_.resize(max_steps_ + 2, 0);
        for (int k = 1; k <= max_steps_; ++k) {
            row_offset_[k + 1] = row_offset_[k] + static_cast<std::size_t>(length_ - k + 1);
        }
        const std::size_t cells = row_offset_[max_steps_ + 1];
        f_.assign(cells, 0.0);
        log_psi_.assign(cells, 0.0);
        ratio_.assign(cells, 0.0);
        build(base_scale);
    }

    SchemeKind kind() const { return kind_; }
    int ambient_length() const { return length_; }
    int max_steps() const { return max_steps_; }
    std::size_t cell_count() const { return f_.size(); }

    bool in_range(int k, int lp) const { return k >= 1 && k <= max_steps_ && lp >= k && lp <= length_; }

    double f(int k, int lp) const { return f_[at(k, lp)]; }

    /// log Psi(K, L'); zero on the K = 1 row, where the batch size is deterministic.
    double log_psi(int k, int lp) const { return log_psi_[at(k, lp)]; }

    /// w_{l+1}(K, L') / w_l(K, L') with m = L' - l; defined for K >= 2, K <= m <= L - 1.
    double ratio(int k, int m) const { return ratio_[at(k, m)]; }

    /// Checks K <= L' and that the table covers (K, L').
    void require(int k, int lp) const {
        if (k < 1 || lp < k) {
            throw InfeasibleError("need 1 <= K <= L' (K=" + std::to_string(k) + ", L'=" + std::to_string(lp) + ")");
        }
        if (k > max_steps_ || lp > length_) {
            throw InfeasibleError("(K=" + std::to_string(k) + ", L'=" + std::to_string(lp) +
                                  ") lies outside the table (K_max=" + std::to_string(max_steps_) +
                                  ", L=" + std::to_string(length_) + ")");
        }
    }

private:
    std::size_t at(int k, int lp) const { return row_offset_[k] + static_cast<std::size_t>(lp - k); }

    /// Step ratio from the f values one level down; both schemes share the shape a f(K-1,m) / (1 + b f(K-1,m-1)).
    double step_ratio(int k, int m) const {
        const double f_m = f(k - 1, m);
        const double f_m1 = f(k - 1, m - 1);
        if (kind_ == SchemeKind::TcAdaptive) {
            return m * f_m / (1.0 + (m - 2) * f_m1);
        }
        return (length_ - m) * f_m / (1.0 + (length_ - m + 2) * f_m1);
    }

    void build(double base_scale) {
        const double L = length_;
        for (int lp = 1; lp <= length_; ++lp) {
            double base = 0.0;
            if (kind_ == SchemeKind::TcAdaptive) {
                base = lp >= 2 ? 1.0 : 0.0;
            } else {
                base = (lp - 1.0) / (L - lp + 1.0);
            }
            f_[at(1, lp)] = base * base_scale;
        }
        for (int k = 2; k <= max_steps_; ++k) {
            for (int m = k; m <= length_ - 1; ++m) {
                ratio_[at(k, m)] = step_ratio(k, m);
            }
            log_psi_[at(k, k)] = 0.0;
            f_[at(k, k)] = 0.0;
            for (int lp = k + 1; lp <= length_; ++lp) {
                const double r = ratio_[at(k, lp - 1)];
                const double lr = r > 0.0 ? std::log(r) : -std::numeric_limits<double>::infinity();
                const double lpsi = logaddexp(0.0, lr + log_psi_[at(k, lp - 1)]);
                log_psi_[at(k, lp)] = lpsi;
                double value = 0.0;
                if (kind_ == SchemeKind::TcAdaptive) {
                    const double num = 1.0 + (lp - 2) * f(k - 1, lp - 1);
                    value = 1.0 - std::exp(std::log(num) - lpsi);
                } else {
                    const double num = 1.0 + (L - lp + 2) * f(k - 1, lp - 1);
                    value = std::exp(std::log(num) - lpsi) - 1.0;
                }
                if (value < 0.0) {
                    if (value < -kNegativeTolerance) {
                        throw Error("coefficient f(" + std::to_string(k) + "," + std::to_string(lp) +
                                    ") = " + std::to_string(value) + " is negative");
                    }
                    value = 0.0;
                }
                f_[at(k, lp)] = value;
            }
        }
    }

    SchemeKind kind_;
    int length_;
    int max_steps_;
    std::vector<std::size_t> row_offset_;
    std::vector<double> f_;
    std::vector<double> log_psi_;
    std::vector<double> ratio_;
};

inline CoeffTable build_coeff_table(SchemeKind kind, int ambient_length, int max_steps) {
    return CoeffTable(kind, ambient_length, max_steps);
}

/// P{|S^(1)| = l} for l = 1..L'-K+1 (index l-1). K = 1 is the point mass on l = L'.
inline std::vector<double> batch_size_pmf(const CoeffTable& table, int k, int lp) {
    table.require(k, lp);
    const int support = lp - k + 1;
    std::vector<double> pmf(support, 0.0);
    if (k == 1) {
        pmf.back() = 1.0;
        return pmf;
    }
    double log_p = -table.log_psi(k, lp);
    pmf[0] = std::exp(log_p);
    for (int l = 1; l < support; ++l) {
        const double r = table.ratio(k, lp - l);
        log_p += r > 0.0 ? std::log(r) : -std::numeric_limits<double>::infinity();
        pmf[l] = std::exp(log_p);
    }
    return pmf;
}

/**
 * Inverse-transform draw of the first batch size in O(1 + l): normalized weights
 * are accumulated through the step ratios until the running sum reaches u.
 * Ties go to the smaller l; rounding shortfall is absorbed by the last size.
 */
inline int sample_batch_size(const CoeffTable& table, int k, int lp, CounterRng& rng) {
    table.require(k, lp);
    if (k == 1) {
        return lp;
    }
    if (lp == k) {
        return 1;
    }
    const int support = lp - k + 1;
    const double u = rng.uniform_open();
    const double log_p1 = -table.log_psi(k, lp);
    int l = 1;
    if (log_p1 > -700.0) {
        double p = std::exp(log_p1);
        double acc = p;
        while (acc < u && l < support) {
            p *= table.ratio(k, lp - l);
            ++l;
            acc += p;
        }
        return l;
    }
    double log_p = log_p1;
    double acc = std::exp(log_p);
    while (acc < u && l < support) {
        log_p += std::log(table.ratio(k, lp - l));
        ++l;
        acc += std::exp(log_p);
    }
    return l;
}

/// One realization: K disjoint nonempty steps whose union is the target.
struct ScheduleRealization {
    std::vector<int> target;               ///< sorted
    std::vector<std::vector<int>> steps;   ///< positions within a step are in draw order

    std::vector<int> sizes() const {
        std::vector<int> out;
        out.reserve(steps.size());
        for (const auto& s : steps) out.push_back(static_cast<int>(s.size()));
        return out;
    }

    /// True iff the steps are nonempty, pairwise disjoint, and cover the target exactly.
    bool is_partition() const {
        std::vector<int> all;
        for (const auto& s : steps) {
            if (s.empty()) return false;
            all.insert(all.end(), s.begin(), s.end());
        }
        std::sort(all.begin(), all.end());
        return all == target;
    }
};

namespace detail {

/// Moves a uniformly random l-subset of pool[begin, end) to pool[begin, begin + l).
inline void partial_shuffle(std::vector<int>& pool, std::size_t begin, int l, CounterRng& rng) {
    const std::size_t end = pool.size();
    for (std::size_t i = begin; i < begin + static_cast<std::size_t>(l); ++i) {
        const std::size_t j = i + rng.bounded(end - i);
        std::swap(pool[i], pool[j]);
    }
}

}  // namespace detail

/// Uniform l-subset of an index set (returned sorted). O(|index_set|).
inline std::vector<int> sample_subset(std::span<const int> index_set, int l, CounterRng& rng) {
    if (l < 1 || static_cast<std::size_t>(l) > index_set.size()) {
        throw InfeasibleError("sample_subset: need 1 <= l <= " + std::to_string(index_set.size()) +
                              ", got " + std::to_string(l));
    }
    std::vector<int> pool(index_set.begin(), index_set.end());
    detail::partial_shuffle(pool, 0, l, rng);
    pool.resize(l);
    std::sort(pool.begin(), pool.end());
    return pool;
}

/**
 * Step sizes of one draw of pi(K, I) with |I| = L'. Uses the same streams as
 * sample_schedule, so both report identical sizes for identical generator state.
 */
inline std::vector<int> sample_sizes(const CoeffTable& table, int k, int lp, CounterRng& rng) {
    table.require(k, lp);
    const std::uint64_t sub_key = rng.next_u64();
    std::vector<int> sizes(k);
    int remaining = lp;
    for (int step = 0; step < k; ++step) {
        CounterRng step_rng(sub_key, static_cast<std::uint64_t>(step));
        const int l = sample_batch_size(table, k - step, remaining, step_rng);
        sizes[step] = l;
        remaining -= l;
    }
    return sizes;
}

/// One draw of pi(K, I): batch size from the table, then a uniform subset, then recurse. O(K + |I|).
inline ScheduleRealization sample_schedule(const CoeffTable& table, int k, std::span<const int> index_set,
                                           CounterRng& rng) {
    const int lp = static_cast<int>(index_set.size());
    table.require(k, lp);
    ScheduleRealization real;
    real.target.assign(index_set.begin(), index_set.end());
    std::sort(real.target.begin(), real.target.end());
    std::vector<int> pool = real.target;
    const std::uint64_t sub_key = rng.next_u64();
    std::size_t pos = 0;
    real.steps.reserve(k);
    for (int step = 0; step < k; ++step) {
        CounterRng step_rng(sub_key, static_cast<std::uint64_t>(step));
        const int l = sample_batch_size(table, k - step, lp - static_cast<int>(pos), step_rng);
        detail::partial_shuffle(pool, pos, l, step_rng);
        real.steps.emplace_back(pool.begin() + pos, pool.begin() + pos + l);
        pos += l;
    }
    return real;
}

/// Sizes of the fixed baseline: ceil(L/K) per step until positions run out.
inline std::vector<int> fixed_uniform_sizes(int k, int length) {
    if (k < 1 || k > length) {
        throw InfeasibleError("fixed schedule needs 1 <= K <= L");
    }
    const int batch = (length + k - 1) / k;
    std::vector<int> sizes;
    for (int remaining = length; remaining > 0 && static_cast<int>(sizes.size()) < k; remaining -= batch) {
        sizes.push_back(std::min(batch, remaining));
    }
    return sizes;
}

/// Fixed baseline over positions 0..L-1; may use fewer than K steps.
inline ScheduleRealization fixed_uniform_schedule(int k, int length, CounterRng& rng) {
    const std::vector<int> sizes = fixed_uniform_sizes(k, length);
    ScheduleRealization real;
    real.target.resize(length);
    for (int i = 0; i < length; ++i) real.target[i] = i;
    std::vector<int> pool = real.target;
    const std::uint64_t sub_key = rng.next_u64();
    std::size_t pos = 0;
    for (std::size_t step = 0; step < sizes.size(); ++step) {
        CounterRng step_rng(sub_key, step);
        detail::partial_shuffle(pool, pos, sizes[step], step_rng);
        real.steps.emplace_back(pool.begin() + pos, pool.begin() + pos + sizes[step]);
        pos += sizes[step];
    }
    return real;
}

struct SizeProfile {
    std::vector<double> mean;
    std::vector<double> stddev;  ///< per-step sample standard deviation of |S^(k)|
    std::size_t trials = 0;
};

/// Monte Carlo mean of |S^(k)| for each step k of pi(K, [L]); trial t uses CounterRng(seed, t).
inline SizeProfile mean_batch_size_profile(const CoeffTable& table, int k, int length, std::size_t trials,
                                           std::uint64_t seed) {
    table.require(k, length);
    if (trials < 1) {
        throw ArityError("profile needs at least one trial");
    }
    SizeProfile prof;
    prof.trials = trials;
    prof.mean.assign(k, 0.0);
    std::vector<double> m2(k, 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
        CounterRng rng(seed, t);
        const std::vector<int> sizes = sample_sizes(table, k, length, rng);
        const double n = static_cast<double>(t + 1);
        for (int s = 0; s < k; ++s) {
            const double delta = sizes[s] - prof.mean[s];
            prof.mean[s] += delta / n;
            m2[s] += delta * (sizes[s] - prof.mean[s]);
        }
    }
    prof.stddev.resize(k);
    for (int s = 0; s < k; ++s) {
        prof.stddev[s] = trials > 1 ? std::sqrt(m2[s] / static_cast<double>(trials - 1)) : 0.0;
    }
    return prof;
}

// ---------------------------------------------------------------------------
// Coefficient bounds

/// Upper bound on f_tc(K, L') for K >= 2: (H_{L'-K+1} - 1) / (K + H_{L'-K+1} - 2).
inline double tc_coeff_bound(int k, int lp, std::span<const double> h) {
    const double hn = h[lp - k + 1];
    return (hn - 1.0) / (k + hn - 2.0);
}

/// Upper bound on f_dtc(K, L') for K >= 2: p / (L - p), p = min{L'-K, (L/K)(H_{L-1} - H_{L-L'})}.
inline double dtc_coeff_bound(int k, int lp, int length, std::span<const double> h) {
    const double p = std::min(static_cast<double>(lp - k),
                              static_cast<double>(length) / k * (h[length - 1] - h[length - lp]));
    return p / (length - p);
}

/// Harmonic DTC bound H_{L-1} / (K - H_{L-1}); +inf when K <= H_{L-1}.
inline double dtc_harmonic_bound(int k, int length) {
    const double h = harmonic(length - 1);
    return k > h ? h / (k - h) : std::numeric_limits<double>::infinity();
}

struct BoundReport {
    double worst_relative_violation = -std::numeric_limits<double>::infinity();  ///< max (f - bound) / bound
    int worst_k = 0;
    int worst_lp = 0;
    double max_diagonal_abs = 0.0;  ///< max |f(K, K)|
    double min_f = std::numeric_limits<double>::infinity();
    std::size_t cells_checked = 0;

    bool ok(double rel_tol = 1e-9, double diag_tol = 1e-12) const {
        return worst_relative_violation <= rel_tol && max_diagonal_abs <= diag_tol && min_f >= 0.0;
    }
};

/// Checks every cell against its harmonic-number bound, the zero diagonal, and f >= 0.
inline BoundReport verify_coeff_bounds(const CoeffTable& table) {
    BoundReport rep;
    const int length = table.ambient_length();
    const std::vector<double> h = harmonic_table(length);
    for (int k = 1; k <= table.max_steps(); ++k) {
        rep.max_diagonal_abs = std::max(rep.max_diagonal_abs, std::abs(table.f(k, k)));
        for (int lp = k; lp <= length; ++lp) {
            const double f = table.f(k, lp);
            rep.min_f = std::min(rep.min_f, f);
            ++rep.cells_checked;
            if (k < 2) {
                continue;
            }
            const double bound = table.kind() == SchemeKind::TcAdaptive ? tc_coeff_bound(k, lp, h)
                                                                         : dtc_coeff_bound(k, lp, length, h);
            double violation = 0.0;
            if (bound > 0.0) {
                violation = (f - bound) / bound;
            } else {
                violation = f > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            }
            if (violation > rep.worst_relative_violation) {
                rep.worst_relative_violation = violation;
                rep.worst_k = k;
                rep.worst_lp = lp;
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// CSV export

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Header `kind,L,K,Lprime,f,log_psi`; log_psi is empty on the K = 1 row.
inline void write_coeff_csv(const CoeffTable& table, std::ostream& out) {
    out << "kind,L,K,Lprime,f,log_psi\n";
    const std::string kind(to_string(table.kind()));
    const std::string len = std::to_string(table.ambient_length());
    std::string line;
    for (int k = 1; k <= table.max_steps(); ++k) {
        for (int lp = k; lp <= table.ambient_length(); ++lp) {
            line.clear();
            line += kind;
            line += ',';
            line += len;
            line += ',';
            line += std::to_string(k);
            line += ',';
            line += std::to_string(lp);
            line += ',';
            line += format_double(table.f(k, lp));
            line += ',';
            if (k >= 2) {
                line += format_double(table.log_psi(k, lp));
            }
            line += '\n';
            out << line;
        }
    }
}

}  // namespace unmask::sched
