#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "unmask/error.hpp"
#include "unmask/gf.hpp"
#include "unmask/rng.hpp"
#include "unmask/sched.hpp"

/// Reed-Solomon experiments: closed-form per-schedule KL, Monte Carlo and exact expectations.
namespace unmask::rsx {

using sched::CoeffTable;
using sched::SchemeKind;

/// Shape of an RS target: length L, dimension d, alphabet size q. KL values depend on nothing else.
struct RsShape {
    int length = 0;
    int dim = 0;
    std::uint64_t q = 0;

    double log_q() const { return std::log(static_cast<double>(q)); }

    void validate() const {
        if (q < 2 || dim < 1 || dim > length || static_cast<std::uint64_t>(length) > q - 1) {
            throw ArityError("RS shape needs q >= 2 and 1 <= d <= L <= q-1 (L=" + std::to_string(length) +
                             ", d=" + std::to_string(dim) + ", q=" + std::to_string(q) + ")");
        }
    }
};

/// KL contributed by one step of size l after r positions are revealed: max(0, l - max(0, d - r)) ln q.
inline double rs_step_kl(int l, int r, const RsShape& shape) {
    if (r >= shape.dim) {
        return 0.0;
    }
    const int excess = l - (shape.dim - r);
    return excess > 0 ? excess * shape.log_q() : 0.0;
}

/// Total KL of a schedule with the given step sizes (must sum to L).
inline double rs_schedule_kl(std::span<const int> sizes, const RsShape& shape) {
    double total = 0.0;
    int revealed = 0;
    for (int l : sizes) {
        if (l < 1) {
            throw ArityError("rs_schedule_kl: step sizes must be positive");
        }
        total += rs_step_kl(l, revealed, shape);
        revealed += l;
    }
    if (revealed != shape.length) {
        throw ArityError("rs_schedule_kl: sizes sum to " + std::to_string(revealed) + ", expected L = " +
                         std::to_string(shape.length));
    }
    return total;
}

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct McEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t trials = 0;
};

/// Mean and standard error of per-trial values, summed in trial order.
inline McEstimate summarize(const std::vector<double>& values) {
    McEstimate est;
    est.trials = values.size();
    if (values.empty()) {
        return est;
    }
    CompensatedSum s;
    for (double v : values) s.add(v);
    est.mean = s.value() / static_cast<double>(values.size());
    if (values.size() > 1) {
        CompensatedSum ss;
        for (double v : values) ss.add((v - est.mean) * (v - est.mean));
        const double var = ss.value() / static_cast<double>(values.size() - 1);
        est.stderr_ = std::sqrt(var / static_cast<double>(values.size()));
    }
    return est;
}

/**
 * KL of one randomly drawn size sequence of the adaptive scheme, drawn with the
 * same streams as sched::sample_sizes. Steps after d positions are revealed
 * contribute nothing and are not drawn.
 */
inline double rs_trial_kl(const CoeffTable& table, int k, const RsShape& shape, CounterRng& rng) {
    const std::uint64_t sub_key = rng.next_u64();
    double total = 0.0;
    int revealed = 0;
    for (int step = 0; step < k && revealed < shape.dim; ++step) {
        CounterRng step_rng(sub_key, static_cast<std::uint64_t>(step));
        const int l = sched::sample_batch_size(table, k - step, shape.length - revealed, step_rng);
        total += rs_step_kl(l, revealed, shape);
        revealed += l;
    }
    return total;
}

/// Runs fn(t) for t in [0, trials) over `threads` workers; results land in trial order.
template <typename Fn>
std::vector<double> run_trials(std::size_t trials, unsigned threads, Fn&& fn) {
    std::vector<double> values(trials);
    threads = std::max(1u, threads);
    if (threads == 1 || trials < 2 * threads) {
        for (std::size_t t = 0; t < trials; ++t) values[t] = fn(t);
        return values;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (trials + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(trials, lo + chunk);
        pool.emplace_back([&, lo, hi] {
            for (std::size_t t = lo; t < hi; ++t) values[t] = fn(t);
        });
    }
    for (auto& th : pool) th.join();
    return values;
}

/// Monte Carlo E[KL] over size sequences of pi(K, [L]); trial t uses CounterRng(seed, t).
inline McEstimate rs_expected_kl_mc(const CoeffTable& table, int k, const RsShape& shape, std::size_t trials,
                                    std::uint64_t seed, unsigned threads = 1) {
    shape.validate();
    table.require(k, shape.length);
    if (trials < 1) {
        throw ArityError("Monte Carlo needs at least one trial");
    }
    const std::vector<double> values = run_trials(trials, threads, [&](std::size_t t) {
        CounterRng rng(seed, t);
        return rs_trial_kl(table, k, shape, rng);
    });
    return summarize(values);
}

/// KL of the fixed baseline, which is deterministic for RS targets.
inline double rs_fixed_kl(int k, const RsShape& shape) {
    const std::vector<int> sizes = sched::fixed_uniform_sizes(k, shape.length);
    return rs_schedule_kl(sizes, shape);
}

/**
 * Exact E[KL] by dynamic programming over (steps left, positions left); valid
 * because the size law depends only on those two counts. O(K L^2) worst case.
 */
inline double rs_expected_kl_exact(const CoeffTable& table, int k, const RsShape& shape) {
    shape.validate();
    table.require(k, shape.length);
    const int L = shape.length;
    // value[n] = expected remaining KL with `steps` steps left and n positions masked.
    std::vector<double> value(L + 1, 0.0);
    for (int n = 1; n <= L; ++n) value[n] = rs_step_kl(n, L - n, shape);
    for (int steps = 2; steps <= k; ++steps) {
        std::vector<double> next(L + 1, 0.0);
        for (int n = steps; n <= L; ++n) {
            const int revealed = L - n;
            if (revealed >= shape.dim) {
                continue;
            }
            const std::vector<double> pmf = sched::batch_size_pmf(table, steps, n);
            CompensatedSum acc;
            for (int l = 1; l <= static_cast<int>(pmf.size()); ++l) {
                if (pmf[l - 1] == 0.0) continue;
                acc.add(pmf[l - 1] * (rs_step_kl(l, revealed, shape) + value[n - l]));
            }
            next[n] = acc.value();
        }
        value = std::move(next);
    }
    return value[L];
}

/**
 * Reference value for one run, in nats: the exact expectation f_tc(K,L)(L-d) ln q
 * for TC; H_{L-1}/(K - H_{L-1}) d ln q for DTC when K > H_{L-1}, otherwise the
 * coefficient bound p/(L-p) times d ln q; the deterministic KL for the fixed
 * baseline. K = 1 is deterministic for every scheme: (L-d) ln q.
 */
inline double theory_nats(SchemeKind kind, const CoeffTable* table, int k, const RsShape& shape) {
    const double lq = shape.log_q();
    if (kind == SchemeKind::FixedUniform) {
        return rs_fixed_kl(k, shape);
    }
    if (k == 1) {
        return (shape.length - shape.dim) * lq;
    }
    if (kind == SchemeKind::TcAdaptive) {
        return table->f(k, shape.length) * (shape.length - shape.dim) * lq;
    }
    const double bound = sched::dtc_harmonic_bound(k, shape.length);
    if (std::isfinite(bound)) {
        return bound * shape.dim * lq;
    }
    const std::vector<double> h = sched::harmonic_table(shape.length);
    return sched::dtc_coeff_bound(k, shape.length, shape.length, h) * shape.dim * lq;
}

/**
 * One draw of the sampler's output for the RS target with the exact predictor.
 * While fewer than d positions are revealed, each position of a step is an
 * independent uniform symbol. Once d or more are revealed, the codeword through
 * the first d revealed positions (in reveal order) fixes every later position.
 * Positions 0-based; the schedule comes from `table` or, if null, the fixed baseline.
 */
inline std::vector<gf::Elem> rs_generate_sequence(const CoeffTable* table, int k, const gf::RsCode& code,
                                                  CounterRng& rng) {
    const int L = code.length();
    sched::ScheduleRealization real;
    if (table) {
        std::vector<int> all(L);
        for (int i = 0; i < L; ++i) all[i] = i;
        real = sched::sample_schedule(*table, k, all, rng);
    } else {
        real = sched::fixed_uniform_schedule(k, L, rng);
    }
    const gf::Elem q = code.field().q();
    std::vector<gf::Elem> out(L, 0);
    std::vector<int> reveal_order;
    std::vector<gf::Elem> coeffs;
    for (const auto& step : real.steps) {
        if (static_cast<int>(reveal_order.size()) < code.dim()) {
            for (int i : step) out[i] = static_cast<gf::Elem>(rng.bounded(q));
        } else {
            if (coeffs.empty()) {
                std::vector<int> pos(reveal_order.begin(), reveal_order.begin() + code.dim());
                std::vector<gf::Elem> val;
                for (int p : pos) val.push_back(out[p]);
                coeffs = code.interpolate_points(pos, val);
            }
            for (int i : step) out[i] = code.evaluate(coeffs, code.eval_points()[i]);
        }
        reveal_order.insert(reveal_order.end(), step.begin(), step.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiments

enum class LogBase { Nats, Bits };

struct RsExperimentConfig {
    RsShape shape;
    SchemeKind scheme = SchemeKind::TcAdaptive;
    std::vector<int> k_values;
    std::size_t trials = 100000;
    std::uint64_t seed = 0;
    bool exact_dp = false;
    LogBase log_base = LogBase::Nats;
    unsigned threads = 1;
};

struct RunRecord {
    SchemeKind scheme = SchemeKind::TcAdaptive;
    int length = 0;
    int k = 0;
    std::uint64_t q = 0;
    int dim = 0;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    double kl_mean = 0.0;
    double kl_stderr = 0.0;
    std::optional<double> kl_exact;
    double theory = 0.0;
};

/// One record per K; the fixed baseline is evaluated in closed form (stderr 0).
inline std::vector<RunRecord> run_experiment(const RsExperimentConfig& cfg) {
    cfg.shape.validate();
    if (cfg.k_values.empty()) {
        throw ArityError("experiment needs at least one K");
    }
    if (cfg.trials < 1) {
        throw ArityError("experiment needs at least one trial");
    }
    int k_max = 0;
    for (int k : cfg.k_values) {
        if (k < 1 || k > cfg.shape.length) {
            throw InfeasibleError("K = " + std::to_string(k) + " outside 1.." + std::to_string(cfg.shape.length));
        }
        k_max = std::max(k_max, k);
    }
    std::unique_ptr<CoeffTable> table;
    if (cfg.scheme != SchemeKind::FixedUniform) {
        table = std::make_unique<CoeffTable>(cfg.scheme, cfg.shape.length, k_max);
    }
    std::vector<RunRecord> records;
    for (int k : cfg.k_values) {
        RunRecord rec;
        rec.scheme = cfg.scheme;
        rec.length = cfg.shape.length;
        rec.k = k;
        rec.q = cfg.shape.q;
        rec.dim = cfg.shape.dim;
        rec.trials = cfg.trials;
        rec.seed = cfg.seed;
        if (table) {
            const McEstimate est = rs_expected_kl_mc(*table, k, cfg.shape, cfg.trials, cfg.seed, cfg.threads);
            rec.kl_mean = est.mean;
            rec.kl_stderr = est.stderr_;
            if (cfg.exact_dp) {
                rec.kl_exact = rs_expected_kl_exact(*table, k, cfg.shape);
            }
        } else {
            rec.kl_mean = rs_fixed_kl(k, cfg.shape);
            rec.kl_stderr = 0.0;
            if (cfg.exact_dp) {
                rec.kl_exact = rec.kl_mean;
            }
        }
        rec.theory = theory_nats(cfg.scheme, table.get(), k, cfg.shape);
        records.push_back(rec);
    }
    return records;
}

inline constexpr const char* kRunCsvHeader =
    "scheme,L,K,q,d,trials,seed,kl_mean_nats,kl_stderr_nats,kl_exact_nats,theory_nats";

inline void write_run_csv(const std::vector<RunRecord>& records, std::ostream& out) {
    out << kRunCsvHeader << '\n';
    for (const auto& r : records) {
        out << sched::to_string(r.scheme) << ',' << r.length << ',' << r.k << ',' << r.q << ',' << r.dim << ','
            << r.trials << ',' << r.seed << ',' << sched::format_double(r.kl_mean) << ','
            << sched::format_double(r.kl_stderr) << ',' << (r.kl_exact ? sched::format_double(*r.kl_exact) : "")
            << ',' << sched::format_double(r.theory) << '\n';
    }
}

}  // namespace unmask::rsx
