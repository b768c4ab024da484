#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "unmask/error.hpp"
#include "unmask/gf.hpp"
#include "unmask/rng.hpp"

/// Exact information measures on dense joint distributions. All values in nats.
namespace unmask::info {

/// Sorted, duplicate-free list of 0-based positions.
using IndexSet = std::vector<int>;

/// Default cap on the number of table entries q^L.
inline constexpr std::size_t kDefaultCap = std::size_t{1} << 24;

/// Probabilities below this are treated as exact zeros in entropy sums.
inline constexpr double kZeroMass = 1e-15;

inline constexpr double kNatsPerBit = 0.69314718055994530942;

inline double to_bits(double nats) { return nats / kNatsPerBit; }

/// Revealed context: position i (0-based) holds symbol values[k] for positions[k] == i.
struct Assignment {
    std::vector<int> positions;
    std::vector<int> values;

    bool empty() const { return positions.empty(); }
    std::size_t size() const { return positions.size(); }
};

inline std::size_t checked_table_size(int q, int length, std::size_t cap = kDefaultCap) {
    if (q < 2 || length < 0) {
        throw ArityError("tabular distribution needs q >= 2 and L >= 0");
    }
    std::size_t n = 1;
    for (int i = 0; i < length; ++i) {
        if (n > cap / static_cast<std::size_t>(q)) {
            throw CapacityError("q^L = " + std::to_string(q) + "^" + std::to_string(length) +
                                " exceeds the table cap of " + std::to_string(cap));
        }
        n *= static_cast<std::size_t>(q);
    }
    return n;
}

/**
 * Joint law of (X_1, ..., X_L) over an alphabet of size q, stored densely.
 * Entry index is the mixed-radix number with position 0 as the lowest digit.
 */
class TabularDist {
public:
    TabularDist(int q, int length, std::vector<double> probs, std::size_t cap = kDefaultCap)
        : q_(q), length_(length), probs_(std::move(probs)) {
        if (length_ < 1) {
            throw ArityError("tabular distribution needs L >= 1");
        }
        const std::size_t n = checked_table_size(q_, length_, cap);
        if (probs_.size() != n) {
            throw ArityError("expected " + std::to_string(n) + " probabilities, got " +
                             std::to_string(probs_.size()));
        }
        double total = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0)) {
                throw ArityError("probabilities must be nonnegative");
            }
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12 * std::max<double>(1.0, static_cast<double>(n) / 1e4)) {
            throw ArityError("probabilities sum to " + std::to_string(total) + ", not 1");
        }
    }

    /// Normalizes nonnegative weights into a distribution.
    static TabularDist from_weights(int q, int length, std::vector<double> weights) {
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(total > 0.0)) {
            throw ArityError("weights must have positive total mass");
        }
        for (double& w : weights) {
            w /= total;
        }
        return TabularDist(q, length, std::move(weights));
    }

    int q() const { return q_; }
    int length() const { return length_; }
    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t idx) const { return probs_[idx]; }
    const std::vector<double>& probs() const { return probs_; }

    std::size_t encode(const std::vector<int>& symbols) const {
        std::size_t idx = 0;
        for (int i = length_ - 1; i >= 0; --i) {
            idx = idx * q_ + static_cast<std::size_t>(symbols[i]);
        }
        return idx;
    }

    std::vector<int> decode(std::size_t idx) const {
        std::vector<int> symbols(length_);
        for (int i = 0; i < length_; ++i) {
            symbols[i] = static_cast<int>(idx % q_);
            idx /= q_;
        }
        return symbols;
    }

private:
    int q_;
    int length_;
    std::vector<double> probs_;
};

namespace detail {

inline void check_index_set(const IndexSet& s, int length, const char* what) {
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] < 0 || s[k] >= length) {
            throw ArityError(std::string(what) + ": position " + std::to_string(s[k]) + " out of range");
        }
        if (k > 0 && s[k] <= s[k - 1]) {
            throw ArityError(std::string(what) + ": index set must be sorted and duplicate-free");
        }
    }
}

inline void check_disjoint(const IndexSet& a, const IndexSet& b, const char* what) {
    IndexSet both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty()) {
        throw ArityError(std::string(what) + ": index sets overlap");
    }
}

inline IndexSet set_union(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline IndexSet set_minus(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

/// Visits every entry with its decoded symbols, odometer style.
template <typename Fn>
void for_each_entry(const TabularDist& dist, Fn&& fn) {
    std::vector<int> x(dist.length(), 0);
    for (std::size_t idx = 0; idx < dist.size(); ++idx) {
        fn(idx, x);
        for (int i = 0; i < dist.length(); ++i) {
            if (++x[i] < dist.q()) {
                break;
            }
            x[i] = 0;
        }
    }
}

/// Unnormalized weights of X_S restricted to entries matching ctx.
inline std::vector<double> restricted_marginal(const TabularDist& dist, const IndexSet& s, const Assignment& ctx) {
    const std::size_t n = checked_table_size(dist.q(), static_cast<int>(s.size()));
    std::vector<double> out(n, 0.0);
    for_each_entry(dist, [&](std::size_t idx, const std::vector<int>& x) {
        const double p = dist[idx];
        if (p == 0.0) {
            return;
        }
        for (std::size_t k = 0; k < ctx.positions.size(); ++k) {
            if (x[ctx.positions[k]] != ctx.values[k]) {
                return;
            }
        }
        std::size_t sub = 0;
        for (std::size_t k = s.size(); k > 0; --k) {
            sub = sub * dist.q() + static_cast<std::size_t>(x[s[k - 1]]);
        }
        out[sub] += p;
    });
    return out;
}

inline double entropy_of(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > kZeroMass) {
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace detail

/// Positions 0..L-1.
inline IndexSet all_positions(int length) {
    IndexSet s(length);
    std::iota(s.begin(), s.end(), 0);
    return s;
}

/// Law of X_S; position k of the result is S[k].
inline TabularDist marginal(const TabularDist& dist, const IndexSet& s) {
    if (s.empty()) {
        throw ArityError("marginal: empty index set");
    }
    detail::check_index_set(s, dist.length(), "marginal");
    return TabularDist::from_weights(dist.q(), static_cast<int>(s.size()),
                                     detail::restricted_marginal(dist, s, Assignment{}));
}

inline void check_assignment(const TabularDist& dist, const Assignment& ctx) {
    if (ctx.positions.size() != ctx.values.size()) {
        throw ArityError("assignment: positions and values differ in length");
    }
    detail::check_index_set(ctx.positions, dist.length(), "assignment");
    for (int v : ctx.values) {
        if (v < 0 || v >= dist.q()) {
            throw ArityError("assignment: symbol out of alphabet");
        }
    }
}

/// Probability that X agrees with ctx on ctx.positions.
inline double context_mass(const TabularDist& dist, const Assignment& ctx) {
    check_assignment(dist, ctx);
    double mass = 0.0;
    detail::for_each_entry(dist, [&](std::size_t idx, const std::vector<int>& x) {
        for (std::size_t k = 0; k < ctx.positions.size(); ++k) {
            if (x[ctx.positions[k]] != ctx.values[k]) {
                return;
            }
        }
        mass += dist[idx];
    });
    return mass;
}

/// Law of X_S given X_ctx = ctx.values.
inline TabularDist conditional(const TabularDist& dist, const IndexSet& s, const Assignment& ctx) {
    if (s.empty()) {
        throw ArityError("conditional: empty index set");
    }
    detail::check_index_set(s, dist.length(), "conditional");
    check_assignment(dist, ctx);
    detail::check_disjoint(s, ctx.positions, "conditional");
    std::vector<double> w = detail::restricted_marginal(dist, s, ctx);
    const double mass = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(mass > 0.0)) {
        throw ZeroContextError("conditional: context has probability zero");
    }
    for (double& p : w) {
        p /= mass;
    }
    return TabularDist(dist.q(), static_cast<int>(s.size()), std::move(w));
}

inline double entropy(const TabularDist& dist) { return detail::entropy_of(dist.probs()); }

/// H(X_S); zero for the empty set.
inline double joint_entropy(const TabularDist& dist, const IndexSet& s) {
    if (s.empty()) {
        return 0.0;
    }
    detail::check_index_set(s, dist.length(), "joint_entropy");
    return detail::entropy_of(detail::restricted_marginal(dist, s, Assignment{}));
}

inline double total_correlation(const TabularDist& dist) {
    double sum = 0.0;
    for (int i = 0; i < dist.length(); ++i) {
        sum += joint_entropy(dist, {i});
    }
    return std::max(0.0, sum - entropy(dist));
}

inline double dual_total_correlation(const TabularDist& dist) {
    const double h = entropy(dist);
    const IndexSet all = all_positions(dist.length());
    double dtc = h;
    for (int i = 0; i < dist.length(); ++i) {
        dtc -= h - joint_entropy(dist, detail::set_minus(all, {i}));
    }
    return std::max(0.0, dtc);
}

/// TC(X_S | X_T) = sum_{i in S} H(X_i | X_T) - H(X_S | X_T), averaged over x_T.
inline double conditional_tc(const TabularDist& dist, const IndexSet& s, const IndexSet& t) {
    detail::check_index_set(s, dist.length(), "conditional_tc");
    detail::check_index_set(t, dist.length(), "conditional_tc");
    detail::check_disjoint(s, t, "conditional_tc");
    const double ht = joint_entropy(dist, t);
    double sum = 0.0;
    for (int i : s) {
        sum += joint_entropy(dist, detail::set_union({i}, t)) - ht;
    }
    return std::max(0.0, sum - (joint_entropy(dist, detail::set_union(s, t)) - ht));
}

/// DTC(X_S | X_T) = H(X_S | X_T) - sum_{i in S} H(X_i | X_{S \ i}, X_T).
inline double conditional_dtc(const TabularDist& dist, const IndexSet& s, const IndexSet& t) {
    detail::check_index_set(s, dist.length(), "conditional_dtc");
    detail::check_index_set(t, dist.length(), "conditional_dtc");
    detail::check_disjoint(s, t, "conditional_dtc");
    const IndexSet st = detail::set_union(s, t);
    const double hst = joint_entropy(dist, st);
    double dtc = hst - joint_entropy(dist, t);
    for (int i : s) {
        dtc -= hst - joint_entropy(dist, detail::set_minus(st, {i}));
    }
    return std::max(0.0, dtc);
}

/// I(X_i ; X_{-i}).
inline double mutual_info_loo(const TabularDist& dist, int i) {
    if (i < 0 || i >= dist.length()) {
        throw ArityError("mutual_info_loo: position out of range");
    }
    const IndexSet rest = detail::set_minus(all_positions(dist.length()), {i});
    return std::max(0.0, joint_entropy(dist, {i}) + joint_entropy(dist, rest) - entropy(dist));
}

// ---------------------------------------------------------------------------
// Example distributions

/// Uniform over {x : x_L = x_1 + ... + x_{L-1} mod q} (XOR parity for q = 2).
inline TabularDist make_parity_dist(int length, int q = 2) {
    if (length < 2) {
        throw ArityError("parity distribution needs L >= 2");
    }
    std::vector<double> w(checked_table_size(q, length), 0.0);
    std::vector<int> x(length, 0);
    const std::size_t free_count = checked_table_size(q, length - 1);
    for (std::size_t idx = 0; idx < free_count; ++idx) {
        std::size_t rem = idx;
        int sum = 0;
        for (int i = 0; i < length - 1; ++i) {
            x[i] = static_cast<int>(rem % q);
            rem /= q;
            sum += x[i];
        }
        x[length - 1] = sum % q;
        std::size_t full = 0;
        for (int i = length - 1; i >= 0; --i) {
            full = full * q + x[i];
        }
        w[full] = 1.0;
    }
    return TabularDist::from_weights(q, length, std::move(w));
}

/// Generator matrix: rows[i][j] is the coefficient of message symbol j in codeword position i.
using GeneratorMatrix = std::vector<std::vector<gf::Elem>>;

/// Uniform over the column span {G u : u in F_q^d} of an L x d generator over GF(2^m).
inline TabularDist make_linear_code_dist(const gf::Field& field, const GeneratorMatrix& gen) {
    const int length = static_cast<int>(gen.size());
    if (length < 1 || gen.front().empty()) {
        throw ArityError("generator matrix must be nonempty");
    }
    const int d = static_cast<int>(gen.front().size());
    const int q = static_cast<int>(field.q());
    for (const auto& row : gen) {
        if (static_cast<int>(row.size()) != d) {
            throw ArityError("generator matrix rows differ in length");
        }
    }
    std::vector<double> w(checked_table_size(q, length), 0.0);
    const std::size_t messages = checked_table_size(q, d);
    std::vector<gf::Elem> u(d);
    std::size_t support = 0;
    for (std::size_t m = 0; m < messages; ++m) {
        std::size_t rem = m;
        for (int j = 0; j < d; ++j) {
            u[j] = static_cast<gf::Elem>(rem % q);
            rem /= q;
        }
        std::size_t idx = 0;
        for (int i = length - 1; i >= 0; --i) {
            gf::Elem xi = 0;
            for (int j = 0; j < d; ++j) {
                xi ^= field.mul(gen[i][j], u[j]);
            }
            idx = idx * q + xi;
        }
        if (w[idx] == 0.0) {
            ++support;
        }
        w[idx] = 1.0;
    }
    if (support != messages) {
        throw RankError("generator matrix has rank below " + std::to_string(d));
    }
    return TabularDist::from_weights(q, length, std::move(w));
}

/// Vandermonde generator of an RS code: G[i][j] = a_i^j.
inline GeneratorMatrix rs_generator_matrix(const gf::RsCode& code) {
    GeneratorMatrix g(code.length(), std::vector<gf::Elem>(code.dim()));
    for (int i = 0; i < code.length(); ++i) {
        for (int j = 0; j < code.dim(); ++j) {
            g[i][j] = code.field().pow(code.eval_points()[i], j);
        }
    }
    return g;
}

inline TabularDist make_rs_dist(const gf::RsCode& code) {
    return make_linear_code_dist(code.field(), rs_generator_matrix(code));
}

/// Independent coordinates with the given per-position marginals.
inline TabularDist make_product_dist(const std::vector<std::vector<double>>& marginals) {
    const int length = static_cast<int>(marginals.size());
    if (length < 1) {
        throw ArityError("product distribution needs at least one factor");
    }
    const int q = static_cast<int>(marginals.front().size());
    std::vector<double> w(checked_table_size(q, length), 0.0);
    TabularDist shape = TabularDist::from_weights(q, length, std::vector<double>(w.size(), 1.0));
    detail::for_each_entry(shape, [&](std::size_t idx, const std::vector<int>& x) {
        double p = 1.0;
        for (int i = 0; i < length; ++i) {
            p *= marginals[i][x[i]];
        }
        w[idx] = p;
    });
    return TabularDist::from_weights(q, length, std::move(w));
}

/**
 * Random joint distribution: Dirichlet(1) weights, with each entry zeroed with
 * probability zero_fraction (at least one entry is kept).
 */
inline TabularDist make_random_dist(int q, int length, CounterRng& rng, double zero_fraction = 0.0) {
    std::vector<double> w(checked_table_size(q, length));
    for (double& x : w) {
        x = -std::log(rng.uniform_open());
        if (zero_fraction > 0.0 && rng.uniform01() < zero_fraction) {
            x = 0.0;
        }
    }
    if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) {
        w[rng.bounded(w.size())] = 1.0;
    }
    return TabularDist::from_weights(q, length, std::move(w));
}

// ---------------------------------------------------------------------------
// CSV fixtures: header "index,probability", one row per entry.

inline void store_csv(const TabularDist& dist, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    out << "index,probability\n";
    out.precision(17);
    for (std::size_t idx = 0; idx < dist.size(); ++idx) {
        out << idx << ',' << dist[idx] << '\n';
    }
    if (!out) {
        throw Error("write failed: " + path);
    }
}

inline TabularDist load_csv(const std::string& path, int q, int length) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path);
    }
    std::vector<double> w(checked_table_size(q, length), 0.0);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream row(line);
        std::size_t idx = 0;
        char comma = 0;
        double p = 0.0;
        if (!(row >> idx >> comma >> p) || comma != ',' || idx >= w.size()) {
            throw ArityError("malformed row in " + path + ": " + line);
        }
        w[idx] = p;
    }
    return TabularDist(q, length, std::move(w));
}

}  // namespace unmask::info
