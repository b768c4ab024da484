#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unmask/error.hpp"

namespace unmask::gf {

using Elem = std::uint32_t;

namespace detail {

inline int degree(std::uint64_t poly) { return poly == 0 ? -1 : 63 - std::countl_zero(poly); }

/// Remainder of a modulo b over GF(2)[x].
inline std::uint64_t poly_mod(std::uint64_t a, std::uint64_t b) {
    const int db = degree(b);
    for (int da = degree(a); da >= db; da = degree(a)) {
        a ^= b << (da - db);
    }
    return a;
}

/// Trial division by every polynomial of degree 1..m/2.
inline bool is_irreducible(std::uint64_t poly) {
    const int m = degree(poly);
    if (m < 1) {
        return false;
    }
    for (int dd = 1; dd <= m / 2; ++dd) {
        for (std::uint64_t f = std::uint64_t{1} << dd; f < (std::uint64_t{2} << dd); ++f) {
            if (poly_mod(poly, f) == 0) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace detail

/// Smallest (by integer value of the coefficient bitmask) irreducible polynomial of degree m.
inline std::uint32_t default_reduction_poly(int m) {
    if (m < 1 || m > 16) {
        throw ArityError("GF(2^m): m must be in 1..16, got " + std::to_string(m));
    }
    for (std::uint32_t p = 1u << m; p < (2u << m); ++p) {
        if (detail::is_irreducible(p)) {
            return p;
        }
    }
    throw Error("no irreducible polynomial found");  // unreachable
}

/**
 * Arithmetic in GF(2^m), m <= 16, backed by log/antilog tables.
 *
 * Elements are the integers 0..q-1 read as coefficient bitmasks. The tables are
 * built from a primitive element found by search, so the reduction polynomial
 * only needs to be irreducible (not primitive). Immutable after construction.
 */
class Field {
public:
    explicit Field(int m) : Field(m, default_reduction_poly(m)) {}

    Field(int m, std::uint32_t reduction_poly) : m_(m), poly_(reduction_poly) {
        if (m < 1 || m > 16) {
            throw ArityError("GF(2^m): m must be in 1..16, got " + std::to_string(m));
        }
        if (detail::degree(reduction_poly) != m || !detail::is_irreducible(reduction_poly)) {
            throw ArityError("reduction polynomial " + std::to_string(reduction_poly) +
                             " is not an irreducible polynomial of degree " + std::to_string(m));
        }
        q_ = 1u << m;
        build_tables();
    }

    int m() const { return m_; }
    Elem q() const { return q_; }
    std::uint32_t reduction_poly() const { return poly_; }
    Elem generator() const { return generator_; }

    bool contains(Elem a) const { return a < q_; }

    static Elem add(Elem a, Elem b) { return a ^ b; }
    static Elem sub(Elem a, Elem b) { return a ^ b; }

    Elem mul(Elem a, Elem b) const {
        if (a == 0 || b == 0) {
            return 0;
        }
        return exp_[log_[a] + log_[b]];
    }

    Elem inv(Elem a) const {
        if (a == 0) {
            throw DivisionByZero("GF(2^m): inverse of zero");
        }
        return exp_[(q_ - 1) - log_[a]];
    }

    Elem div(Elem a, Elem b) const { return mul(a, inv(b)); }

    Elem pow(Elem a, std::uint64_t e) const {
        if (e == 0) {
            return 1;
        }
        if (a == 0) {
            return 0;
        }
        return exp_[(static_cast<std::uint64_t>(log_[a]) * e) % (q_ - 1)];
    }

    /// Carry-less product reduced modulo the reduction polynomial, without tables.
    Elem mul_slow(Elem a, Elem b) const {
        std::uint64_t acc = 0;
        for (int i = 0; i < m_; ++i) {
            if ((b >> i) & 1u) {
                acc ^= static_cast<std::uint64_t>(a) << i;
            }
        }
        return static_cast<Elem>(detail::poly_mod(acc, poly_));
    }

private:
    void build_tables() {
        const Elem order = q_ - 1;
        exp_.assign(2 * static_cast<std::size_t>(order) + 1, 0);
        log_.assign(q_, 0);
        if (order == 1) {
            generator_ = 1;
            exp_ = {1, 1, 1};
            return;
        }
        for (Elem g = 2; g < q_; ++g) {
            Elem x = 1;
            Elem period = 0;
            do {
                x = mul_slow(x, g);
                ++period;
            } while (x != 1 && period <= order);
            if (period == order) {
                generator_ = g;
                break;
            }
        }
        Elem x = 1;
        for (Elem i = 0; i < order; ++i) {
            exp_[i] = x;
            log_[x] = i;
            x = mul_slow(x, generator_);
        }
        for (std::size_t i = order; i < exp_.size(); ++i) {
            exp_[i] = exp_[i - order];
        }
    }

    int m_;
    std::uint32_t poly_;
    Elem q_ = 0;
    Elem generator_ = 0;
    std::vector<Elem> exp_;
    std::vector<Elem> log_;
};

/// Field size q = 2^m -> m; throws unless q is a power of two in [2, 2^16].
inline int log2_field_size(std::uint64_t q) {
    if (q < 2 || q > (1u << 16) || !std::has_single_bit(q)) {
        throw ArityError("field size must be a power of two in [2, 65536], got " + std::to_string(q));
    }
    return std::countr_zero(q);
}

/**
 * Reed-Solomon evaluation code: codewords (p(a_1), ..., p(a_L)) for polynomials
 * p of degree < d, where a_i are distinct nonzero evaluation points.
 */
class RsCode {
public:
    /// Evaluation points default to the elements labelled 1..L.
    RsCode(std::shared_ptr<const Field> field, int length, int dim)
        : RsCode(field, length, dim, default_points(length)) {}

    RsCode(std::shared_ptr<const Field> field, int length, int dim, std::vector<Elem> eval_points)
        : field_(std::move(field)), length_(length), dim_(dim), points_(std::move(eval_points)) {
        if (dim_ < 1 || dim_ > length_ || static_cast<Elem>(length_) > field_->q() - 1) {
            throw ArityError("RS code needs 1 <= d <= L <= q-1 (d=" + std::to_string(dim_) +
                             ", L=" + std::to_string(length_) + ", q=" + std::to_string(field_->q()) + ")");
        }
        if (points_.size() != static_cast<std::size_t>(length_)) {
            throw ArityError("RS code: expected " + std::to_string(length_) + " evaluation points");
        }
        std::vector<Elem> sorted = points_;
        std::sort(sorted.begin(), sorted.end());
        if (sorted.front() == 0 || !field_->contains(sorted.back()) ||
            std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ArityError("RS code: evaluation points must be distinct nonzero field elements");
        }
    }

    const Field& field() const { return *field_; }
    std::shared_ptr<const Field> field_ptr() const { return field_; }
    int length() const { return length_; }
    int dim() const { return dim_; }
    const std::vector<Elem>& eval_points() const { return points_; }

    /// Horner evaluation of sum_j coeffs[j] x^j.
    Elem evaluate(std::span<const Elem> coeffs, Elem x) const {
        Elem acc = 0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) {
            acc = field_->mul(acc, x) ^ *it;
        }
        return acc;
    }

    std::vector<Elem> encode(std::span<const Elem> coeffs) const {
        if (coeffs.size() != static_cast<std::size_t>(dim_)) {
            throw ArityError("rs_encode: expected " + std::to_string(dim_) + " coefficients, got " +
                             std::to_string(coeffs.size()));
        }
        std::vector<Elem> word(length_);
        for (int i = 0; i < length_; ++i) {
            word[i] = evaluate(coeffs, points_[i]);
        }
        return word;
    }

    /**
     * Coefficients of the unique degree-<d polynomial through the first d
     * assignments (in key order). Remaining assignments are checked against it.
     * Positions are 0-based.
     */
    std::vector<Elem> interpolate(const std::map<int, Elem>& assignments) const {
        if (assignments.size() < static_cast<std::size_t>(dim_)) {
            throw Underdetermined("rs_interpolate: need " + std::to_string(dim_) + " points, got " +
                                  std::to_string(assignments.size()));
        }
        std::vector<int> pos;
        std::vector<Elem> val;
        for (const auto& [p, v] : assignments) {
            if (p < 0 || p >= length_) {
                throw ArityError("rs_interpolate: position " + std::to_string(p) + " out of range");
            }
            pos.push_back(p);
            val.push_back(v);
        }
        std::vector<Elem> coeffs = interpolate_points(std::span(pos).first(dim_), std::span(val).first(dim_));
        for (std::size_t k = dim_; k < pos.size(); ++k) {
            if (evaluate(coeffs, points_[pos[k]]) != val[k]) {
                throw InconsistentError("rs_interpolate: position " + std::to_string(pos[k]) +
                                        " disagrees with the interpolating polynomial");
            }
        }
        return coeffs;
    }

    /// Lagrange interpolation through exactly d (position, value) pairs, no consistency check.
    std::vector<Elem> interpolate_points(std::span<const int> positions, std::span<const Elem> values) const {
        if (positions.size() != static_cast<std::size_t>(dim_) || values.size() != positions.size()) {
            throw ArityError("interpolate_points: expected exactly d points");
        }
        const Field& f = *field_;
        const std::size_t d = positions.size();
        // Master polynomial prod_j (x - a_j), coefficients low to high.
        std::vector<Elem> master(d + 1, 0);
        master[0] = 1;
        for (std::size_t j = 0; j < d; ++j) {
            const Elem a = points_[positions[j]];
            for (std::size_t t = j + 1; t > 0; --t) {
                master[t] = master[t - 1] ^ f.mul(master[t], a);
            }
            master[0] = f.mul(master[0], a);
        }
        std::vector<Elem> coeffs(d, 0);
        std::vector<Elem> basis(d);
        for (std::size_t j = 0; j < d; ++j) {
            const Elem a = points_[positions[j]];
            // Synthetic division master / (x - a).
            Elem carry = 0;
            for (std::size_t t = d; t > 0; --t) {
                carry = master[t] ^ f.mul(carry, a);
                basis[t - 1] = carry;
            }
            Elem denom = 1;
            for (std::size_t t = 0; t < d; ++t) {
                if (t != j) {
                    denom = f.mul(denom, a ^ points_[positions[t]]);
                }
            }
            const Elem scale = f.div(values[j], denom);
            if (scale == 0) {
                continue;
            }
            for (std::size_t t = 0; t < d; ++t) {
                coeffs[t] ^= f.mul(scale, basis[t]);
            }
        }
        return coeffs;
    }

private:
    static std::vector<Elem> default_points(int length) {
        std::vector<Elem> pts(std::max(length, 0));
        for (int i = 0; i < length; ++i) {
            pts[i] = static_cast<Elem>(i + 1);
        }
        return pts;
    }

    std::shared_ptr<const Field> field_;
    int length_;
    int dim_;
    std::vector<Elem> points_;
};

}  // namespace unmask::gf
