#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unmask/error.hpp"
#include "unmask/gf.hpp"
#include "unmask/info.hpp"
#include "unmask/oracle.hpp"
#include "unmask/rng.hpp"
#include "unmask/rsx.hpp"
#include "unmask/sched.hpp"

/// Randomized cross-checks of the schedulers against the exhaustive oracle.
namespace unmask::verify {

using info::Assignment;
using info::TabularDist;
using oracle::MaskPredictor;
using oracle::ScheduleLaw;
using sched::CoeffTable;
using sched::SchemeKind;

struct CheckRow {
    std::string check;
    std::size_t instances = 0;
    double max_residual = 0.0;
    bool pass = false;
    std::string note;  ///< set when the check could not run (e.g. capacity)
};

struct VerifyOptions {
    std::uint64_t seed = 1;
    std::size_t dists = 50;           ///< corpus size for the expected-KL checks
    std::optional<int> length;        ///< fixes L for the expected-KL checks (default: 3..6)
    std::optional<int> steps;         ///< fixes K for the expected-KL checks (default: 2..4)
    double cap = oracle::kDefaultEnumerationCap;
    int bounds_length = 2000;
    int bounds_max_steps = 1000;
    int psi_length = 200;
    double corrupt_base_scale = 1.0;  ///< != 1 perturbs the base row of every table (negative control)
};

inline const std::vector<std::string>& all_checks() {
    static const std::vector<std::string> names = {
        "single_batch_tc", "tc_expected_kl",  "dtc_expected_kl_bound", "dtc_conditional",  "decoupling",
        "decoupling_masked", "recursion",     "tc_dtc_ratio",          "tc_dtc_identity", "chain_rule",
        "psi",             "coeff_bounds_tc", "coeff_bounds_dtc",      "size_only",       "partition"};
    return names;
}

namespace detail {

struct Instance {
    TabularDist dist;
    int k;
};

/// Random q=2 distributions with L in 3..6 (or fixed) and K in 2..min(4, L) (or fixed).
inline std::vector<Instance> corpus(const VerifyOptions& opt, std::uint64_t salt, std::size_t count) {
    std::vector<Instance> out;
    for (std::size_t n = 0; n < count; ++n) {
        CounterRng rng(opt.seed ^ (salt * 0x9E3779B97F4A7C15ull), n);
        const int L = opt.length ? *opt.length : 3 + static_cast<int>(rng.bounded(4));
        int k = opt.steps ? *opt.steps : 2 + static_cast<int>(rng.bounded(3));
        k = std::min(k, L);
        const double zeros = n % 3 == 2 ? 0.3 : 0.0;
        out.push_back({info::make_random_dist(2, L, rng, zeros), k});
    }
    return out;
}

/// Positive-probability context revealing c positions of a sample drawn from dist.
inline Assignment random_context(const TabularDist& dist, int c, CounterRng& rng) {
    const double u = rng.uniform01();
    std::size_t idx = 0;
    double acc = dist[0];
    while (idx + 1 < dist.size() && (acc <= u || dist[idx] == 0.0)) {
        acc += dist[++idx];
    }
    while (dist[idx] == 0.0) idx = (idx + dist.size() - 1) % dist.size();
    Assignment ctx;
    if (c == 0) {
        return ctx;
    }
    const std::vector<int> x = dist.decode(idx);
    const std::vector<int> pos = sched::sample_subset(info::all_positions(dist.length()), c, rng);
    ctx.positions = pos;
    for (int p : pos) ctx.values.push_back(x[p]);
    return ctx;
}

struct Tracker {
    CheckRow row;
    double tol;
    Tracker(std::string name, double tolerance) : tol(tolerance) { row.check = std::move(name); }
    void add(double residual) {
        ++row.instances;
        row.max_residual = std::max(row.max_residual, residual);
    }
    CheckRow done() {
        row.pass = row.instances > 0 && row.max_residual <= tol;
        return row;
    }
};

}  // namespace detail

inline CheckRow run_check(const std::string& name, const VerifyOptions& opt) {
    using detail::Tracker;
    const double scale = opt.corrupt_base_scale;
    auto table_for = [&](SchemeKind kind, int L, int kmax) { return CoeffTable(kind, L, kmax, scale); };

    if (name == "single_batch_tc") {
        Tracker t(name, 1e-12);
        for (std::size_t n = 0; n < 200; ++n) {
            CounterRng rng(opt.seed ^ 0x11, n);
            const int L = 3 + static_cast<int>(rng.bounded(3));
            const int q = 2 + static_cast<int>(rng.bounded(2));
            const TabularDist dist = info::make_random_dist(q, L, rng, n % 4 == 3 ? 0.3 : 0.0);
            const int c = static_cast<int>(rng.bounded(L - 1));
            const Assignment ctx = detail::random_context(dist, c, rng);
            const auto rest = oracle::detail::complement(ctx.positions, L);
            const int s_size = 1 + static_cast<int>(rng.bounded(rest.size()));
            const auto s = sched::sample_subset(rest, s_size, rng);
            const double lhs = oracle::single_batch_kl(dist, ctx, s);
            const double rhs = info::total_correlation(info::conditional(dist, s, ctx));
            t.add(std::abs(lhs - rhs));
        }
        return t.done();
    }
    if (name == "tc_expected_kl" || name == "dtc_expected_kl_bound") {
        const bool tc = name == "tc_expected_kl";
        Tracker t(name, 1e-10);
        for (const auto& inst : detail::corpus(opt, tc ? 3 : 5, opt.dists)) {
            const int L = inst.dist.length();
            const CoeffTable table = table_for(tc ? SchemeKind::TcAdaptive : SchemeKind::DtcAdaptive, L, inst.k);
            const MaskPredictor pred = MaskPredictor::exact(inst.dist);
            const double e = oracle::expected_kl(ScheduleLaw::adaptive(table), inst.k, pred, opt.cap);
            if (tc) {
                t.add(std::abs(e - table.f(inst.k, L) * info::total_correlation(inst.dist)));
            } else {
                t.add(std::max(0.0, e - table.f(inst.k, L) * info::dual_total_correlation(inst.dist)));
            }
        }
        return t.done();
    }
    if (name == "dtc_conditional") {
        Tracker t(name, 1e-10);
        for (std::size_t n = 0; n < 20; ++n) {
            CounterRng rng(opt.seed ^ 0x55, n);
            const int L = 4 + static_cast<int>(rng.bounded(3));
            const TabularDist dist = info::make_random_dist(2, L, rng, n % 3 == 2 ? 0.3 : 0.0);
            const int c = 1 + static_cast<int>(rng.bounded(L - 2));
            const Assignment ctx = detail::random_context(dist, c, rng);
            const int rest = L - c;
            const int k = 2 + static_cast<int>(rng.bounded(std::min(3, rest - 1)));
            const CoeffTable table = table_for(SchemeKind::DtcAdaptive, L, k);
            const double e = oracle::expected_kl_conditional(ScheduleLaw::adaptive(table), k, ctx,
                                                             MaskPredictor::exact(dist), opt.cap);
            t.add(std::max(0.0, e - oracle::dtc_conditional_bound(table, k, dist, ctx)));
        }
        return t.done();
    }
    if (name == "decoupling" || name == "decoupling_masked") {
        const bool masked = name == "decoupling_masked";
        Tracker t(name, 1e-10);
        const std::vector<detail::Instance> insts = detail::corpus(opt, 14, 20);
        for (std::size_t n = 0; n < insts.size(); ++n) {
            const auto& inst = insts[n];
            const SchemeKind kind = n % 3 == 0 ? SchemeKind::TcAdaptive
                                    : n % 3 == 1 ? SchemeKind::DtcAdaptive
                                                 : SchemeKind::FixedUniform;
            const int L = inst.dist.length();
            const CoeffTable table = table_for(kind == SchemeKind::DtcAdaptive ? SchemeKind::DtcAdaptive
                                                                                : SchemeKind::TcAdaptive,
                                               L, inst.k);
            const ScheduleLaw law = kind == SchemeKind::FixedUniform ? ScheduleLaw::fixed() : ScheduleLaw::adaptive(table);
            const MaskPredictor exact = MaskPredictor::exact(inst.dist);
            const MaskPredictor pert = MaskPredictor::perturbed(inst.dist, 0.5, opt.seed + n);
            const double gap = oracle::expected_kl(law, inst.k, pert, opt.cap) -
                               oracle::expected_kl(law, inst.k, exact, opt.cap);
            const double eps = masked ? oracle::prediction_error_masked(law, inst.k, pert, opt.cap)
                                      : oracle::prediction_error(law, inst.k, pert, opt.cap);
            t.add(std::abs(gap - eps));
        }
        return t.done();
    }
    if (name == "recursion") {
        Tracker t(name, 1e-10);
        for (std::size_t n = 0; n < 12; ++n) {
            CounterRng rng(opt.seed ^ 0x22, n);
            const int L = 4;
            const TabularDist dist = info::make_random_dist(2, L, rng, n % 3 == 2 ? 0.3 : 0.0);
            const SchemeKind kind = n % 2 == 0 ? SchemeKind::TcAdaptive : SchemeKind::DtcAdaptive;
            const int k = n % 2 == 0 ? 2 : 3;
            const CoeffTable table = table_for(kind, L, k);
            const bool perturbed = n % 4 >= 2;
            const MaskPredictor pred = perturbed ? MaskPredictor::perturbed(dist, 0.5, opt.seed + n)
                                                 : MaskPredictor::exact(dist);
            t.add(oracle::recursion_check(ScheduleLaw::adaptive(table), k, Assignment{}, pred, opt.cap).residual());
        }
        return t.done();
    }
    if (name == "tc_dtc_ratio" || name == "tc_dtc_identity") {
        const bool ratio_check = name == "tc_dtc_ratio";
        Tracker t(name, ratio_check ? 0.0 : 1e-10);
        for (std::size_t n = 0; n < 1000; ++n) {
            CounterRng rng(opt.seed ^ 0x77, n);
            const int L = 2 + static_cast<int>(rng.bounded(3));
            const int q = 2 + static_cast<int>(rng.bounded(2));
            const TabularDist dist = info::make_random_dist(q, L, rng, n % 4 == 3 ? 0.5 : 0.0);
            const double tc = info::total_correlation(dist);
            const double dtc = info::dual_total_correlation(dist);
            if (ratio_check) {
                t.add(std::max(0.0, tc - (L - 1) * dtc - 1e-12));
            } else {
                double sum = 0.0;
                for (int i = 0; i < L; ++i) sum += info::mutual_info_loo(dist, i);
                t.add(std::abs(tc + dtc - sum));
            }
        }
        return t.done();
    }
    if (name == "chain_rule") {
        Tracker t(name, 1e-12);
        for (std::size_t n = 0; n < 50; ++n) {
            CounterRng rng(opt.seed ^ 0xC4, n);
            const int L = 3 + static_cast<int>(rng.bounded(3));
            const int q = 2 + static_cast<int>(rng.bounded(2));
            const TabularDist dist = info::make_random_dist(q, L, rng, n % 3 == 2 ? 0.3 : 0.0);
            const CoeffTable table(SchemeKind::TcAdaptive, L, L);
            const auto real = sched::sample_schedule(table, L, info::all_positions(L), rng);
            const TabularDist out = oracle::sampled_distribution(real, MaskPredictor::exact(dist));
            double worst = 0.0;
            for (std::size_t i = 0; i < dist.size(); ++i) worst = std::max(worst, std::abs(out[i] - dist[i]));
            t.add(worst);
        }
        return t.done();
    }
    if (name == "psi") {
        Tracker t(name, 1e-10);
        for (SchemeKind kind : {SchemeKind::TcAdaptive, SchemeKind::DtcAdaptive}) {
            const int L = opt.psi_length;
            const CoeffTable table = table_for(kind, L, L);
            for (int k = 2; k <= L; ++k) {
                for (int lp = k; lp <= L; ++lp) {
                    const double a = table.log_psi(k, lp);
                    const double b = oracle::direct_log_psi(table, k, lp);
                    t.add(std::abs(a - b) / std::max(1.0, std::abs(b)));
                }
            }
        }
        return t.done();
    }
    if (name == "coeff_bounds_tc" || name == "coeff_bounds_dtc") {
        Tracker t(name, 1e-9);
        const SchemeKind kind = name == "coeff_bounds_tc" ? SchemeKind::TcAdaptive : SchemeKind::DtcAdaptive;
        const CoeffTable table = table_for(kind, opt.bounds_length, opt.bounds_max_steps);
        const sched::BoundReport rep = sched::verify_coeff_bounds(table);
        t.row.instances = rep.cells_checked;
        t.row.max_residual = std::max(0.0, rep.worst_relative_violation);
        CheckRow row = t.done();
        row.pass = rep.ok();
        return row;
    }
    if (name == "size_only") {
        Tracker t(name, 1e-12);
        auto field = std::make_shared<const gf::Field>(2);
        for (std::size_t n = 0; n < 100; ++n) {
            CounterRng rng(opt.seed ^ 0x5E, n);
            const int L = 3;
            const int d = 1 + static_cast<int>(rng.bounded(2));
            const gf::RsCode code(field, L, d);
            const TabularDist dist = info::make_rs_dist(code);
            const MaskPredictor pred = MaskPredictor::exact(dist);
            const int k = 1 + static_cast<int>(rng.bounded(L));
            const CoeffTable table(SchemeKind::TcAdaptive, L, k);
            const auto a = sched::sample_schedule(table, k, info::all_positions(L), rng);
            // Same sizes, independently chosen subsets.
            sched::ScheduleRealization b;
            b.target = a.target;
            std::vector<int> pool = info::all_positions(L);
            for (int size : a.sizes()) {
                const auto pick = sched::sample_subset(pool, size, rng);
                b.steps.push_back(pick);
                std::vector<int> rest;
                std::set_difference(pool.begin(), pool.end(), pick.begin(), pick.end(), std::back_inserter(rest));
                pool = rest;
            }
            const double ka = oracle::kl(dist, oracle::sampled_distribution(a, pred)).value;
            const double kb = oracle::kl(dist, oracle::sampled_distribution(b, pred)).value;
            const std::vector<int> sizes = a.sizes();
            const double closed = rsx::rs_schedule_kl(sizes, rsx::RsShape{L, d, 4});
            t.add(std::max(std::abs(ka - kb), std::abs(ka - closed)));
        }
        return t.done();
    }
    if (name == "partition") {
        Tracker t(name, 0.0);
        for (SchemeKind kind : {SchemeKind::TcAdaptive, SchemeKind::DtcAdaptive}) {
            const int L = 40;
            const CoeffTable table(kind, L, L);
            for (std::size_t n = 0; n < 500; ++n) {
                CounterRng rng(opt.seed ^ 0x9A, n);
                const int k = 1 + static_cast<int>(rng.bounded(L));
                const auto real = sched::sample_schedule(table, k, info::all_positions(L), rng);
                t.add(real.is_partition() && static_cast<int>(real.steps.size()) == k ? 0.0 : 1.0);
            }
        }
        return t.done();
    }
    throw ArityError("unknown check '" + name + "'");
}

/// Runs the named checks (all when empty); capacity failures are reported per row.
inline std::vector<CheckRow> run_checks(const std::vector<std::string>& names, const VerifyOptions& opt) {
    const std::vector<std::string>& list = names.empty() ? all_checks() : names;
    std::vector<CheckRow> rows;
    for (const auto& name : list) {
        try {
            rows.push_back(run_check(name, opt));
        } catch (const CapacityError& e) {
            CheckRow row;
            row.check = name;
            row.pass = false;
            row.note = e.what();
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_check_csv(const std::vector<CheckRow>& rows, std::ostream& out) {
    out << "check,instances,max_residual,pass\n";
    for (const auto& r : rows) {
        out << r.check << ',' << r.instances << ',' << sched::format_double(r.max_residual) << ','
            << (r.pass ? "true" : "false") << '\n';
    }
}

}  // namespace unmask::verify
