// Command-line front end: coefficient export, verification, schedules, profiles, RS experiments.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unmask/unmask.hpp"

#ifndef UNMASK_GIT_DESCRIBE
#define UNMASK_GIT_DESCRIBE "unknown"
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitArgs = 2;
constexpr int kExitVerify = 3;
constexpr int kExitCapacity = 4;

using unmask::sched::SchemeKind;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string strip_underscores(std::string s) {
    s.erase(std::remove(s.begin(), s.end(), '_'), s.end());
    return s;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Writes to the named file, or stdout when the path is empty.
class Output {
public:
    explicit Output(const std::string& path) : path_(path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) throw IoError("cannot open " + path + " for writing");
        }
    }
    std::ostream& stream() { return path_.empty() ? std::cout : file_; }
    void close() {
        if (!path_.empty()) {
            file_.close();
            if (!file_) throw IoError("failed writing " + path_);
        }
    }

private:
    std::string path_;
    std::ofstream file_;
};

struct Common {
    std::string out;
    std::string manifest;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool with_seed) {
    sub->add_option("--out", c.out, "output file (default: stdout)");
    sub->add_option("--manifest", c.manifest, "write a JSON run manifest to this path");
    if (with_seed) {
        sub->add_option("--seed", c.seed, "64-bit seed")->transform(strip_underscores);
    }
}

SchemeKind scheme_option(const std::string& s) { return unmask::sched::parse_scheme(s); }

void write_manifest(const Common& c, const std::vector<std::string>& args, const std::string& started) {
    if (c.manifest.empty()) return;
    nlohmann::json j;
    j["args"] = args;
    j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
    j["git_describe"] = UNMASK_GIT_DESCRIBE;
    j["started"] = started;
    j["finished"] = utc_now();
    std::ofstream out(c.manifest);
    if (!out) throw IoError("cannot open " + c.manifest + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + c.manifest);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Randomized unmasking schedules: coefficients, verification and Reed-Solomon experiments"};
    app.require_subcommand(1);
    const std::vector<std::string> args(argv, argv + argc);

    // coeffs
    Common coeffs_c;
    std::string coeffs_scheme;
    int coeffs_L = 0;
    int coeffs_kmax = 0;
    auto* coeffs = app.add_subcommand("coeffs", "export the coefficient table as CSV");
    coeffs->add_option("--scheme", coeffs_scheme, "tc or dtc")->required()->check(CLI::IsMember({"tc", "dtc"}));
    coeffs->add_option("--L", coeffs_L, "sequence length")->required()->transform(strip_underscores);
    coeffs->add_option("--Kmax", coeffs_kmax, "largest number of steps")->required()->transform(strip_underscores);
    add_common(coeffs, coeffs_c, false);

    // verify
    Common verify_c;
    unmask::verify::VerifyOptions vopt;
    std::vector<std::string> checks;
    std::size_t dists = vopt.dists;
    std::optional<int> verify_L;
    std::optional<int> verify_K;
    double cap = vopt.cap;
    int bounds_L = vopt.bounds_length;
    int bounds_kmax = vopt.bounds_max_steps;
    double corrupt = 1.0;
    auto* verify = app.add_subcommand("verify", "run the exhaustive cross-checks and print a CSV report");
    verify->add_option("--checks", checks, "subset of checks to run")
        ->delimiter(',')
        ->check(CLI::IsMember(unmask::verify::all_checks()));
    verify->add_option("--dists", dists, "corpus size for the expected-KL checks")->transform(strip_underscores);
    verify->add_option("--L", verify_L, "fix the sequence length of the expected-KL corpus")
        ->transform(strip_underscores);
    verify->add_option("--K", verify_K, "fix the number of steps of the expected-KL corpus")
        ->transform(strip_underscores);
    verify->add_option("--cap", cap, "largest schedule enumeration")->transform(strip_underscores);
    verify->add_option("--bounds-L", bounds_L, "sequence length of the coefficient-bound tables")
        ->transform(strip_underscores);
    verify->add_option("--bounds-Kmax", bounds_kmax, "K_max of the coefficient-bound tables")
        ->transform(strip_underscores);
    verify->add_option("--corrupt-table", corrupt, "scale the base row of every table (negative control)")
        ->group("");
    add_common(verify, verify_c, true);

    // schedule
    Common sched_c;
    std::string sched_scheme;
    int sched_L = 0;
    int sched_K = 0;
    auto* schedule = app.add_subcommand("schedule", "sample one schedule and print its steps");
    schedule->add_option("--scheme", sched_scheme, "tc, dtc or fixed")
        ->required()
        ->check(CLI::IsMember({"tc", "dtc", "fixed"}));
    schedule->add_option("--L", sched_L, "sequence length")->required()->transform(strip_underscores);
    schedule->add_option("--K", sched_K, "number of steps")->required()->transform(strip_underscores);
    add_common(schedule, sched_c, true);

    // profile
    Common prof_c;
    std::string prof_scheme;
    int prof_L = 0;
    int prof_K = 0;
    std::size_t prof_trials = 10000;
    auto* profile = app.add_subcommand("profile", "Monte Carlo mean step size per iteration");
    profile->add_option("--scheme", prof_scheme, "tc or dtc")->required()->check(CLI::IsMember({"tc", "dtc"}));
    profile->add_option("--L", prof_L, "sequence length")->required()->transform(strip_underscores);
    profile->add_option("--K", prof_K, "number of steps")->required()->transform(strip_underscores);
    profile->add_option("--trials", prof_trials, "number of schedules")->transform(strip_underscores);
    add_common(profile, prof_c, true);

    // rs
    Common rs_c;
    std::string rs_scheme;
    unmask::rsx::RsExperimentConfig rs_cfg;
    std::string log_base = "nats";
    auto* rs = app.add_subcommand("rs", "expected KL on a Reed-Solomon target");
    rs->add_option("--scheme", rs_scheme, "tc, dtc or fixed")->required()->check(CLI::IsMember({"tc", "dtc", "fixed"}));
    rs->add_option("--L", rs_cfg.shape.length, "code length")->required()->transform(strip_underscores);
    rs->add_option("--q", rs_cfg.shape.q, "alphabet size")->required()->transform(strip_underscores);
    rs->add_option("--d", rs_cfg.shape.dim, "code dimension")->required()->transform(strip_underscores);
    rs->add_option("--K", rs_cfg.k_values, "numbers of steps (comma separated)")
        ->required()
        ->delimiter(',')
        ->transform(strip_underscores);
    rs->add_option("--trials", rs_cfg.trials, "Monte Carlo trials per K")->transform(strip_underscores);
    rs->add_flag("--exact-dp", rs_cfg.exact_dp, "also compute the exact expectation");
    rs->add_option("--log-base", log_base, "units of the printed summary")->check(CLI::IsMember({"nats", "bits"}));
    rs->add_option("--threads", rs_cfg.threads, "worker threads")->transform(strip_underscores);
    add_common(rs, rs_c, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitArgs;
    }

    const std::string started = utc_now();
    try {
        if (*coeffs) {
            const unmask::sched::CoeffTable table(scheme_option(coeffs_scheme), coeffs_L, coeffs_kmax);
            Output out(coeffs_c.out);
            unmask::sched::write_coeff_csv(table, out.stream());
            out.close();
            write_manifest(coeffs_c, args, started);
            return kExitOk;
        }
        if (*verify) {
            vopt.seed = verify_c.seed.value_or(1);
            vopt.dists = dists;
            vopt.length = verify_L;
            vopt.steps = verify_K;
            vopt.cap = cap;
            vopt.bounds_length = bounds_L;
            vopt.bounds_max_steps = bounds_kmax;
            vopt.corrupt_base_scale = corrupt;
            const auto rows = unmask::verify::run_checks(checks, vopt);
            Output out(verify_c.out);
            unmask::verify::write_check_csv(rows, out.stream());
            out.close();
            write_manifest(verify_c, args, started);
            bool capacity = false;
            bool failed = false;
            for (const auto& r : rows) {
                if (!r.note.empty()) {
                    std::cerr << r.check << ": " << r.note << '\n';
                    capacity = true;
                }
                failed = failed || !r.pass;
            }
            if (!failed) return kExitOk;
            return capacity ? kExitCapacity : kExitVerify;
        }
        if (*schedule) {
            if (!sched_c.seed) throw unmask::ArityError("--seed is required");
            const SchemeKind kind = scheme_option(sched_scheme);
            unmask::CounterRng rng(*sched_c.seed, 0);
            unmask::sched::ScheduleRealization real;
            if (kind == SchemeKind::FixedUniform) {
                real = unmask::sched::fixed_uniform_schedule(sched_K, sched_L, rng);
            } else {
                if (sched_K < 1 || sched_K > sched_L) throw unmask::InfeasibleError("need 1 <= K <= L");
                const unmask::sched::CoeffTable table(kind, sched_L, sched_K);
                real = unmask::sched::sample_schedule(table, sched_K, unmask::info::all_positions(sched_L), rng);
            }
            Output out(sched_c.out);
            for (std::size_t k = 0; k < real.steps.size(); ++k) {
                std::vector<int> step = real.steps[k];
                std::sort(step.begin(), step.end());
                out.stream() << "step " << (k + 1) << ':';
                for (int i : step) out.stream() << ' ' << (i + 1);
                out.stream() << '\n';
            }
            out.close();
            write_manifest(sched_c, args, started);
            return kExitOk;
        }
        if (*profile) {
            if (!prof_c.seed) throw unmask::ArityError("--seed is required");
            if (prof_K < 1 || prof_K > prof_L) throw unmask::InfeasibleError("need 1 <= K <= L");
            const unmask::sched::CoeffTable table(scheme_option(prof_scheme), prof_L, prof_K);
            const auto prof = unmask::sched::mean_batch_size_profile(table, prof_K, prof_L, prof_trials, *prof_c.seed);
            Output out(prof_c.out);
            out.stream() << "step,mean_size,std_size\n";
            for (int k = 0; k < prof_K; ++k) {
                out.stream() << (k + 1) << ',' << unmask::sched::format_double(prof.mean[k]) << ','
                             << unmask::sched::format_double(prof.stddev[k]) << '\n';
            }
            out.close();
            write_manifest(prof_c, args, started);
            return kExitOk;
        }
        if (*rs) {
            rs_cfg.scheme = scheme_option(rs_scheme);
            if (rs_cfg.scheme != SchemeKind::FixedUniform && !rs_c.seed) {
                throw unmask::ArityError("--seed is required for randomized schemes");
            }
            rs_cfg.seed = rs_c.seed.value_or(0);
            rs_cfg.log_base = log_base == "bits" ? unmask::rsx::LogBase::Bits : unmask::rsx::LogBase::Nats;
            const auto records = unmask::rsx::run_experiment(rs_cfg);
            Output out(rs_c.out);
            unmask::rsx::write_run_csv(records, out.stream());
            out.close();
            if (!rs_c.out.empty()) {
                const double unit = rs_cfg.log_base == unmask::rsx::LogBase::Bits ? unmask::info::kNatsPerBit : 1.0;
                const char* name = rs_cfg.log_base == unmask::rsx::LogBase::Bits ? "bits" : "nats";
                for (const auto& r : records) {
                    std::cout << unmask::sched::to_string(r.scheme) << " K=" << r.k << ": kl_mean=" << r.kl_mean / unit
                              << " +- " << r.kl_stderr / unit << ", theory=" << r.theory / unit << ' ' << name << '\n';
                }
            }
            write_manifest(rs_c, args, started);
            return kExitOk;
        }
    } catch (const unmask::CapacityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCapacity;
    } catch (const unmask::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitArgs;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitArgs;
}
