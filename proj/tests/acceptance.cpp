// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "unmask/unmask.hpp"

using namespace unmask;
using sched::CoeffTable;
using sched::SchemeKind;

namespace {

// Pinned tolerances.
constexpr double kExactTol = 1e-10;
constexpr double kBoundRelTol = 1e-9;
constexpr double kDiagTol = 1e-12;
constexpr double kPsiRelTol = 1e-10;
constexpr double kMcSigmas = 4.0;
constexpr double kFitSigmas = 2.0;
constexpr double kProfileSigmas = 5.0;
constexpr double kSmallRuntimeSec = 30.0;
constexpr double kTableBuildSec = 5.0;
constexpr double kRsRuntimeSec = 300.0;

constexpr int kL = 2000;
constexpr std::uint64_t kQ = 2048;
constexpr std::size_t kTrials = 100000;
constexpr std::uint64_t kSeed = 1;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
    std::printf("%s criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

verify::CheckRow check(const std::string& name, const verify::VerifyOptions& opt = {}) {
    return verify::run_check(name, opt);
}

std::string row_detail(const verify::CheckRow& r) {
    std::string s = r.check + " instances=" + std::to_string(r.instances) + fmt(" max_residual=%.3g", r.max_residual);
    if (!r.note.empty()) s += " note=" + r.note;
    return s;
}

// Least-squares line through (x, y); returns max |residual| / stderr over points.
double affine_fit_worst(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& se) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = std::abs(y[i] - (icpt + slope * x[i]));
        worst = std::max(worst, se[i] > 0 ? r / se[i] : (r > 0 ? INFINITY : 0.0));
    }
    return worst;
}

void criterion_1() {
    const auto t0 = Clock::now();
    const auto r = check("tc_expected_kl");
    const double sec = seconds_since(t0);
    report(1, r.pass && r.max_residual <= kExactTol && r.instances == 50 && sec < kSmallRuntimeSec,
           "TC expected KL equals f_tc(K,L) TC(p)", row_detail(r) + fmt(" runtime=%.2fs", sec));
}

void criterion_2() {
    const auto a = check("dtc_expected_kl_bound");
    const auto b = check("dtc_conditional");
    report(2, a.pass && b.pass && a.instances == 50 && b.instances == 20, "DTC expected KL bound",
           row_detail(a) + "; " + row_detail(b));
}

void criterion_3() {
    const auto r = check("decoupling");
    report(3, r.pass && r.instances == 20 && r.max_residual <= kExactTol, "prediction-error decoupling",
           row_detail(r));
}

void criterion_4() {
    bool ok = true;
    std::string detail;
    for (SchemeKind kind : {SchemeKind::TcAdaptive, SchemeKind::DtcAdaptive}) {
        const auto t0 = Clock::now();
        const CoeffTable table(kind, kL, 1000);
        const double sec = seconds_since(t0);
        const auto rep = sched::verify_coeff_bounds(table);
        ok = ok && rep.ok(kBoundRelTol, kDiagTol) && sec < kTableBuildSec;
        detail += std::string(sched::to_string(kind)) + fmt(": build=%.2fs", sec) +
                  fmt(" worst_rel=%.3g", rep.worst_relative_violation) + fmt(" max_diag=%.3g", rep.max_diagonal_abs) +
                  fmt(" min_f=%.3g", rep.min_f) + " cells=" + std::to_string(rep.cells_checked) + "; ";
    }
    report(4, ok, "coefficient bounds at L=2000, Kmax=1000", detail);
}

void criterion_5() {
    const auto r = check("psi");
    report(5, r.pass && r.max_residual <= kPsiRelTol, "normalizer recurrence vs direct expansion", row_detail(r));
}

void criterion_6() {
    const auto t0 = Clock::now();
    const rsx::RsShape shape{kL, kL - 5, kQ};
    const CoeffTable table(SchemeKind::TcAdaptive, kL, 1000);
    const auto h = sched::harmonic_table(kL);
    bool ok = true;
    std::string detail;
    for (int k : {10, 50, 100, 200, 500, 1000}) {
        const auto mc = rsx::rs_expected_kl_mc(table, k, shape, kTrials, kSeed, worker_count());
        const double theory = table.f(k, kL) * 5 * shape.log_q();
        const double bound = sched::tc_coeff_bound(k, kL, h) * 5 * shape.log_q();
        const double fixed = rsx::rs_fixed_kl(k, shape);
        const double z = std::abs(mc.mean - theory) / mc.stderr_;
        const bool row = z <= kMcSigmas && mc.mean <= bound && mc.mean <= fixed;
        ok = ok && row;
        char buf[256];
        std::snprintf(buf, sizeof buf, "K=%d mc=%.5g+-%.2g theory=%.5g z=%.2f bound=%.4g fixed=%.4g; ", k, mc.mean,
                      mc.stderr_, theory, z, bound, fixed);
        detail += buf;
    }
    const double sec = seconds_since(t0);
    report(6, ok && sec < kRsRuntimeSec, "TC scheme on RS target, L-d=5", detail + fmt("runtime=%.1fs", sec));
}

void criterion_7() {
    const int k = 500;
    std::vector<double> x, y_tc, se_tc, y_dtc, se_dtc;
    const CoeffTable tc(SchemeKind::TcAdaptive, kL, k);
    const CoeffTable dtc(SchemeKind::DtcAdaptive, kL, k);
    // Independent streams per sweep point, so each point's stderr is its own noise scale.
    for (int c = 1; c <= 10; ++c) {
        x.push_back(c);
        const std::uint64_t seed = kSeed + static_cast<std::uint64_t>(c);
        const auto a = rsx::rs_expected_kl_mc(tc, k, rsx::RsShape{kL, kL - c, kQ}, kTrials, seed, worker_count());
        y_tc.push_back(a.mean);
        se_tc.push_back(a.stderr_);
        const auto b = rsx::rs_expected_kl_mc(dtc, k, rsx::RsShape{kL, c, kQ}, kTrials, seed, worker_count());
        y_dtc.push_back(b.mean);
        se_dtc.push_back(b.stderr_);
    }
    const double w_tc = affine_fit_worst(x, y_tc, se_tc);
    const double w_dtc = affine_fit_worst(x, y_dtc, se_dtc);
    report(7, w_tc < kFitSigmas && w_dtc < kFitSigmas, "affine in codimension (TC) and dimension (DTC) at K=500",
           fmt("tc worst residual/stderr=%.3f", w_tc) + fmt(", dtc worst residual/stderr=%.3f", w_dtc));
}

void criterion_8() {
    const rsx::RsShape shape{kL, 5, kQ};
    const CoeffTable table(SchemeKind::DtcAdaptive, kL, 1000);
    const double h = sched::harmonic(kL - 1);
    bool ok = true;
    std::string detail;
    for (int k : {10, 50, 100, 500, 1000}) {
        const auto mc = rsx::rs_expected_kl_mc(table, k, shape, kTrials, kSeed, worker_count());
        const double bound = h / (k - h) * 5 * shape.log_q();
        const double fixed = rsx::rs_fixed_kl(k, shape);
        const bool row = mc.mean <= bound + kMcSigmas * mc.stderr_ && mc.mean <= fixed;
        ok = ok && row;
        char buf[200];
        std::snprintf(buf, sizeof buf, "K=%d mc=%.4g+-%.2g bound=%.4g fixed=%.4g; ", k, mc.mean, mc.stderr_, bound,
                      fixed);
        detail += buf;
    }
    report(8, ok, "DTC scheme on RS target, d=5", detail);
}

void criterion_9() {
    const int k = 1000;
    const std::size_t trials = 10000;
    bool ok = true;
    std::string detail;
    for (SchemeKind kind : {SchemeKind::TcAdaptive, SchemeKind::DtcAdaptive}) {
        const CoeffTable table(kind, kL, k);
        const auto p = sched::mean_batch_size_profile(table, k, kL, trials, kSeed);
        const double se = std::hypot(p.stddev.front(), p.stddev.back()) / std::sqrt(static_cast<double>(trials));
        const double gap = p.mean.front() - p.mean.back();
        const double z = gap / se;
        ok = ok && (kind == SchemeKind::TcAdaptive ? z > kProfileSigmas : z < -kProfileSigmas);
        char buf[200];
        std::snprintf(buf, sizeof buf, "%s: first=%.4g last=%.4g z=%.1f; ", std::string(sched::to_string(kind)).c_str(), p.mean.front(),
                      p.mean.back(), z);
        detail += buf;
    }
    report(9, ok, "batch-size profile at K=1000, L=2000", detail);
}

void criterion_10() {
    bool ok = true;
    std::string detail;
    for (const char* name : {"tc_dtc_ratio", "single_batch_tc", "chain_rule", "size_only", "partition"}) {
        const auto r = check(name);
        ok = ok && r.pass && r.instances > 0;
        detail += row_detail(r) + "; ";
    }
    report(10, ok, "property suites", detail);
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    std::printf("%d of 10 criteria failed; total %.1fs\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
