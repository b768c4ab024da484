#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "unmask/gf.hpp"
#include "unmask/info.hpp"
#include "unmask/oracle.hpp"
#include "unmask/rng.hpp"
#include "unmask/rsx.hpp"
#include "unmask/sched.hpp"

using namespace unmask;
using rsx::RsShape;
using sched::CoeffTable;
using sched::SchemeKind;

namespace {

std::shared_ptr<const gf::Field> gf_of(int m) { return std::make_shared<const gf::Field>(m); }

// Random partition of 0..L-1 with the given step sizes.
sched::ScheduleRealization partition_with_sizes(const std::vector<int>& sizes, CounterRng& rng) {
    const int L = std::accumulate(sizes.begin(), sizes.end(), 0);
    std::vector<int> perm(L);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = L - 1; i > 0; --i) std::swap(perm[i], perm[rng.bounded(i + 1)]);
    sched::ScheduleRealization r;
    r.target.resize(L);
    std::iota(r.target.begin(), r.target.end(), 0);
    int pos = 0;
    for (int l : sizes) {
        r.steps.emplace_back(perm.begin() + pos, perm.begin() + pos + l);
        pos += l;
    }
    return r;
}

void for_each_composition(int n, std::vector<int>& prefix, const std::function<void(const std::vector<int>&)>& fn) {
    if (n == 0) {
        fn(prefix);
        return;
    }
    for (int l = 1; l <= n; ++l) {
        prefix.push_back(l);
        for_each_composition(n - l, prefix, fn);
        prefix.pop_back();
    }
}

// Upper 0.999 chi-square quantile by the Wilson-Hilferty approximation.
double chi2_crit(int df) {
    const double z = 3.090232306167813;
    const double a = 2.0 / (9.0 * df);
    return df * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

double chi2(const std::vector<double>& expected_prob, const std::vector<int>& counts, int n, int* df) {
    double stat = 0.0;
    double pooled_e = 0.0;
    double pooled_o = 0.0;
    int cells = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double e = expected_prob[i] * n;
        if (e >= 5.0) {
            stat += (counts[i] - e) * (counts[i] - e) / e;
            ++cells;
        } else {
            pooled_e += e;
            pooled_o += counts[i];
        }
    }
    if (pooled_e > 0.0) {
        stat += (pooled_o - pooled_e) * (pooled_o - pooled_e) / std::max(pooled_e, 1e-300);
        ++cells;
    }
    *df = cells - 1;
    return stat;
}

}  // namespace

TEST(RsStepKl, Examples) {
    const RsShape s{5, 2, 8};
    EXPECT_EQ(rsx::rs_step_kl(1, 0, s), 0.0);
    EXPECT_EQ(rsx::rs_step_kl(2, 0, s), 0.0);
    EXPECT_NEAR(rsx::rs_step_kl(3, 0, s), std::log(8.0), 1e-15);
    EXPECT_NEAR(rsx::rs_step_kl(3, 1, s), 2 * std::log(8.0), 1e-15);
    EXPECT_EQ(rsx::rs_step_kl(3, 2, s), 0.0);
    const std::vector<int> one{5};
    EXPECT_NEAR(rsx::rs_schedule_kl(one, s), 3 * std::log(8.0), 1e-14);
    const std::vector<int> singles{1, 1, 1, 1, 1};
    EXPECT_EQ(rsx::rs_schedule_kl(singles, s), 0.0);
    const std::vector<int> short_sizes{2, 2};
    EXPECT_THROW(rsx::rs_schedule_kl(short_sizes, s), ArityError);
    EXPECT_THROW((RsShape{5, 6, 8}.validate()), ArityError);
    EXPECT_THROW((RsShape{8, 2, 8}.validate()), ArityError);
}

// Every composition of L, checked against the brute-force sampled law of the
// uniform RS distribution under a random partition with those step sizes.
TEST(RsScheduleKl, MatchesBruteForce) {
    for (auto [m, L] : {std::pair{2, 3}, std::pair{3, 4}}) {
        for (int d = 1; d <= L; ++d) {
            const gf::RsCode code(gf_of(m), L, d);
            const info::TabularDist dist = info::make_rs_dist(code);
            const oracle::MaskPredictor pred = oracle::MaskPredictor::exact(dist);
            const RsShape shape{L, d, code.field().q()};
            CounterRng rng(m * 100 + d);
            std::vector<int> prefix;
            for_each_composition(L, prefix, [&](const std::vector<int>& sizes) {
                for (int rep = 0; rep < 2; ++rep) {
                    const auto real = partition_with_sizes(sizes, rng);
                    const auto sampled = oracle::sampled_distribution(real, pred);
                    const auto kl = oracle::kl(dist, sampled);
                    ASSERT_FALSE(kl.infinite);
                    ASSERT_NEAR(kl.value, rsx::rs_schedule_kl(sizes, shape), 1e-12)
                        << "m=" << m << " d=" << d << " first size " << sizes[0];
                }
            });
        }
    }
}

TEST(RsMonteCarlo, DegenerateSchedules) {
    const RsShape shape{60, 40, 64};
    const CoeffTable t(SchemeKind::TcAdaptive, 60, 60);
    const auto all_single = rsx::rs_expected_kl_mc(t, 60, shape, 200, 1);
    EXPECT_EQ(all_single.mean, 0.0);
    EXPECT_NEAR(all_single.stderr_, 0.0, 1e-12);
    const auto one_step = rsx::rs_expected_kl_mc(t, 1, shape, 50, 1);
    EXPECT_NEAR(one_step.mean, 20 * std::log(64.0), 1e-12);
    EXPECT_NEAR(one_step.stderr_, 0.0, 1e-12);
    EXPECT_THROW(rsx::rs_expected_kl_mc(t, 2, shape, 0, 1), ArityError);
}

TEST(RsExact, TcIdentityAtModerateScale) {
    const RsShape shape{50, 45, 64};
    const CoeffTable t(SchemeKind::TcAdaptive, 50, 50);
    for (int k : {2, 5, 10, 25, 50}) {
        const double want = t.f(k, 50) * 5 * std::log(64.0);
        EXPECT_NEAR(rsx::rs_expected_kl_exact(t, k, shape), want, 1e-10 * std::max(1.0, want)) << "K=" << k;
    }
}

TEST(RsExact, TcIdentityForEveryCodimension) {
    const CoeffTable t(SchemeKind::TcAdaptive, 30, 12);
    for (int d = 1; d <= 30; ++d) {
        const RsShape shape{30, d, 32};
        for (int k = 2; k <= 12; k += 5) {
            const double want = t.f(k, 30) * (30 - d) * std::log(32.0);
            ASSERT_NEAR(rsx::rs_expected_kl_exact(t, k, shape), want, 1e-10 * std::max(1.0, want));
        }
    }
}

TEST(RsExact, DtcBelowBound) {
    const RsShape shape{50, 5, 64};
    const CoeffTable t(SchemeKind::DtcAdaptive, 50, 50);
    const auto h = sched::harmonic_table(50);
    for (int k : {2, 5, 10, 25}) {
        const double e = rsx::rs_expected_kl_exact(t, k, shape);
        EXPECT_LE(e, t.f(k, 50) * 5 * std::log(64.0) + 1e-10);
        EXPECT_LE(e, sched::dtc_coeff_bound(k, 50, 50, h) * 5 * std::log(64.0) + 1e-10);
    }
}

TEST(RsMonteCarlo, AgreesWithExact) {
    for (auto kind : {SchemeKind::TcAdaptive, SchemeKind::DtcAdaptive}) {
        const RsShape shape{50, kind == SchemeKind::TcAdaptive ? 45 : 5, 64};
        const CoeffTable t(kind, 50, 10);
        for (int k : {2, 5, 10}) {
            const auto mc = rsx::rs_expected_kl_mc(t, k, shape, 20000, 7);
            const double exact = rsx::rs_expected_kl_exact(t, k, shape);
            EXPECT_LT(std::abs(mc.mean - exact), 4 * mc.stderr_ + 1e-12)
                << sched::to_string(kind) << " K=" << k << " mc=" << mc.mean << " exact=" << exact;
        }
    }
}

TEST(RsMonteCarlo, ThreadCountDoesNotChangeResult) {
    const RsShape shape{200, 195, 256};
    const CoeffTable t(SchemeKind::TcAdaptive, 200, 20);
    const auto a = rsx::rs_expected_kl_mc(t, 20, shape, 3000, 11, 1);
    const auto b = rsx::rs_expected_kl_mc(t, 20, shape, 3000, 11, 3);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(RsFixed, ClosedForm) {
    const RsShape shape{10, 7, 16};
    // Sizes 4,4,2: the first step overshoots d by nothing, the second by 1.
    EXPECT_NEAR(rsx::rs_fixed_kl(3, shape), 1 * std::log(16.0), 1e-15);
    EXPECT_NEAR(rsx::rs_fixed_kl(1, shape), 3 * std::log(16.0), 1e-15);
    EXPECT_EQ(rsx::rs_fixed_kl(10, shape), 0.0);
}

TEST(TheoryNats, Conventions) {
    const RsShape shape{100, 95, 128};
    const CoeffTable tc(SchemeKind::TcAdaptive, 100, 20);
    const CoeffTable dtc(SchemeKind::DtcAdaptive, 100, 20);
    const double lq = std::log(128.0);
    EXPECT_NEAR(rsx::theory_nats(SchemeKind::TcAdaptive, &tc, 1, shape), 5 * lq, 1e-12);
    EXPECT_NEAR(rsx::theory_nats(SchemeKind::DtcAdaptive, &dtc, 1, shape), 5 * lq, 1e-12);
    EXPECT_NEAR(rsx::theory_nats(SchemeKind::TcAdaptive, &tc, 10, shape), tc.f(10, 100) * 5 * lq, 1e-12);
    const double h = sched::harmonic(99);
    EXPECT_NEAR(rsx::theory_nats(SchemeKind::DtcAdaptive, &dtc, 20, shape), h / (20 - h) * 95 * lq, 1e-10);
    const auto ht = sched::harmonic_table(100);
    EXPECT_NEAR(rsx::theory_nats(SchemeKind::DtcAdaptive, &dtc, 3, shape),
                sched::dtc_coeff_bound(3, 100, 100, ht) * 95 * lq, 1e-10);
    EXPECT_EQ(rsx::theory_nats(SchemeKind::FixedUniform, nullptr, 7, shape), rsx::rs_fixed_kl(7, shape));
}

TEST(GenerateSequence, SingletonStepsGiveUniformCodewords) {
    const gf::RsCode code(gf_of(2), 3, 2);
    const info::TabularDist dist = info::make_rs_dist(code);
    const CoeffTable t(SchemeKind::TcAdaptive, 3, 3);
    const int n = 16000;
    std::vector<int> counts(dist.size(), 0);
    for (int i = 0; i < n; ++i) {
        CounterRng rng(21, i);
        const auto seq = rsx::rs_generate_sequence(&t, 3, code, rng);
        ++counts[dist.encode(std::vector<int>(seq.begin(), seq.end()))];
    }
    int df = 0;
    const double stat = chi2(dist.probs(), counts, n, &df);
    EXPECT_EQ(df, 15);
    EXPECT_LT(stat, 37.697);
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (dist[i] == 0.0) EXPECT_EQ(counts[i], 0);
}

TEST(GenerateSequence, OneStepIsUniformOverAllWords) {
    const gf::RsCode code(gf_of(2), 3, 2);
    const int n = 64000;
    std::vector<int> counts(64, 0);
    const CoeffTable t(SchemeKind::DtcAdaptive, 3, 1);
    for (int i = 0; i < n; ++i) {
        CounterRng rng(22, i);
        const auto seq = rsx::rs_generate_sequence(&t, 1, code, rng);
        ++counts[seq[0] + 4 * seq[1] + 16 * seq[2]];
    }
    int df = 0;
    const double stat = chi2(std::vector<double>(64, 1.0 / 64), counts, n, &df);
    EXPECT_EQ(df, 63);
    EXPECT_LT(stat, 103.44);
}

// Two steps at L=4: on codewords the output law is the schedule-weighted
// mixture of the brute-force sampled laws. Words reached through a context no
// codeword matches depend on how the generator fills such contexts, so they
// are pooled into one cell.
TEST(GenerateSequence, MatchesEnumeratedMixture) {
    const gf::RsCode code(gf_of(3), 4, 2);
    const info::TabularDist dist = info::make_rs_dist(code);
    const oracle::MaskPredictor pred = oracle::MaskPredictor::exact(dist);
    for (auto kind : {SchemeKind::TcAdaptive, SchemeKind::DtcAdaptive, SchemeKind::FixedUniform}) {
        const CoeffTable* tp = nullptr;
        std::unique_ptr<CoeffTable> t;
        oracle::ScheduleLaw law = oracle::ScheduleLaw::fixed();
        if (kind != SchemeKind::FixedUniform) {
            t = std::make_unique<CoeffTable>(kind, 4, 2);
            tp = t.get();
            law = oracle::ScheduleLaw::adaptive(*t);
        }
        std::vector<double> mix(dist.size(), 0.0);
        for (const auto& [real, prob] : oracle::enumerate_schedule_law(law, 2, {0, 1, 2, 3})) {
            const auto s = oracle::sampled_distribution(real, pred);
            for (std::size_t i = 0; i < dist.size(); ++i) mix[i] += prob * s[i];
        }
        const int n = 60000;
        std::vector<int> counts(dist.size(), 0);
        for (int i = 0; i < n; ++i) {
            CounterRng rng(23, i);
            const auto seq = rsx::rs_generate_sequence(tp, 2, code, rng);
            ++counts[dist.encode(std::vector<int>(seq.begin(), seq.end()))];
        }
        std::vector<double> cell_p;
        std::vector<int> cell_n;
        double other_p = 0.0;
        int other_n = 0;
        for (std::size_t i = 0; i < dist.size(); ++i) {
            if (dist[i] > 0.0) {
                cell_p.push_back(mix[i]);
                cell_n.push_back(counts[i]);
            } else {
                other_p += mix[i];
                other_n += counts[i];
            }
        }
        cell_p.push_back(other_p);
        cell_n.push_back(other_n);
        int df = 0;
        const double stat = chi2(cell_p, cell_n, n, &df);
        EXPECT_GE(df, 60);
        EXPECT_LT(stat, chi2_crit(df)) << sched::to_string(kind) << " df=" << df;
    }
}

TEST(RunExperiment, DeterministicAndWellFormed) {
    rsx::RsExperimentConfig cfg;
    cfg.shape = RsShape{100, 95, 128};
    cfg.scheme = SchemeKind::TcAdaptive;
    cfg.k_values = {5, 20};
    cfg.trials = 2000;
    cfg.seed = 3;
    cfg.exact_dp = true;
    const auto a = rsx::run_experiment(cfg);
    cfg.threads = 3;
    const auto b = rsx::run_experiment(cfg);
    ASSERT_EQ(a.size(), 2u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].kl_mean, b[i].kl_mean);
        EXPECT_EQ(a[i].kl_stderr, b[i].kl_stderr);
        ASSERT_TRUE(a[i].kl_exact.has_value());
        EXPECT_NEAR(*a[i].kl_exact, a[i].theory, 1e-10);
    }
    std::ostringstream os;
    rsx::write_run_csv(a, os);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, rsx::kRunCsvHeader);
    int rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 10);
        EXPECT_EQ(line.rfind("tc,100,", 0), 0u);
        ++rows;
    }
    EXPECT_EQ(rows, 2);

    cfg.k_values = {101};
    EXPECT_THROW(rsx::run_experiment(cfg), InfeasibleError);
    cfg.k_values = {};
    EXPECT_THROW(rsx::run_experiment(cfg), ArityError);
}

TEST(RunExperiment, FixedHasNoNoise) {
    rsx::RsExperimentConfig cfg;
    cfg.shape = RsShape{100, 95, 128};
    cfg.scheme = SchemeKind::FixedUniform;
    cfg.k_values = {10};
    cfg.trials = 10;
    const auto r = rsx::run_experiment(cfg);
    EXPECT_EQ(r[0].kl_stderr, 0.0);
    EXPECT_EQ(r[0].kl_mean, rsx::rs_fixed_kl(10, cfg.shape));
    EXPECT_EQ(r[0].theory, r[0].kl_mean);
}
