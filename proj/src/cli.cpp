#include "qdesign/cli.hpp"
#include "qdesign/imse.hpp"
#include "qdesign/io.hpp"
#include "qdesign/oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace qdesign::cli {

namespace {

using json = nlohmann::ordered_json;

const std::map<std::string, Algorithm> algo_names{
    {"cd", Algorithm::CD}, {"mwu", Algorithm::MWU}, {"fista", Algorithm::FISTA}, {"fw", Algorithm::FW}};

const std::map<std::string, ScreeningRule> rule_names{{"none", ScreeningRule::None},
                                                      {"d0", ScreeningRule::D0},
                                                      {"d1", ScreeningRule::D1},
                                                      {"d2", ScreeningRule::D2},
                                                      {"b", ScreeningRule::B}};

struct InstanceArgs
{
    std::string prefix;
    std::string A_path;
    std::string c_path;
    std::string K_path;
    double lambda = 0;
    bool normalize = false;

    void attach(CLI::App* app)
    {
        app->add_option("--instance", prefix, "Instance prefix (PREFIX_A.csv, PREFIX_K.csv, PREFIX.json)");
        app->add_option("--A", A_path, "Feature matrix CSV (m rows, p columns)");
        app->add_option("--c", c_path, "Target vector CSV (single column)");
        app->add_option("--K", K_path, "Target matrix CSV (m x r)");
        app->add_option("--lambda", lambda, "Prior weight lambda (overrides the instance file)");
        app->add_flag("--normalize", normalize, "Scale every column of A to unit norm");
    }

    io::LoadedInstance load() const
    {
        if (!prefix.empty()) {
            auto loaded = io::load_instance_prefix(prefix, normalize);
            if (lambda > 0)
                loaded.instance = ProblemInstance<double>(loaded.instance.A(), loaded.instance.K(), lambda);
            return loaded;
        }
        if (A_path.empty() || (c_path.empty() == K_path.empty()))
            throw Error(ErrorCode::InvalidOptions, "give --instance, or --A with exactly one of --c/--K");
        io::InstanceFiles f;
        f.A_path = A_path;
        f.target_path = c_path.empty() ? K_path : c_path;
        f.lambda = lambda;
        f.normalize = normalize;
        return io::load_instance(f);
    }

    json describe() const
    {
        json j;
        if (!prefix.empty()) j["instance"] = prefix;
        if (!A_path.empty()) j["A"] = A_path;
        if (!c_path.empty()) j["c"] = c_path;
        if (!K_path.empty()) j["K"] = K_path;
        j["lambda_flag"] = lambda;
        j["normalize"] = normalize;
        return j;
    }
};

json base_summary(const std::string& command)
{
    json j;
    j["command"] = command;
    j["version"] = version;
    j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    return j;
}

json instance_shape(const ProblemInstance<double>& inst)
{
    return json{{"m", inst.m()}, {"p", inst.p()}, {"r", inst.r()}, {"lambda", inst.lambda()}};
}

void emit(std::ostream& out, const json& summary, const std::string& path)
{
    const std::string text = summary.dump(2) + "\n";
    if (!path.empty()) io::write_text_atomic(path, text);
    out << text;
}

unsigned thread_budget(std::size_t jobs)
{
    unsigned n = 0;
    if (const char* env = std::getenv("QDESIGN_THREADS")) n = unsigned(std::strtoul(env, nullptr, 10));
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return unsigned(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

struct BenchRow
{
    std::string algo;
    std::string screen;
    double time_s = 0;
    long iters = 0;
    double gap = 0;
    double value = 0;
    std::string status;
    std::string trace;
};

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Bayesian c- and L-optimal designs through the quadratic (group) lasso", "qdesign"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version);

    // solve
    InstanceArgs solve_inst;
    std::string algo = "cd", screen = "none", out_design, out_trace, out_x, summary_path;
    long period = 10, max_iters = 100000;
    double tol = 1e-6, mwu_exponent = 0.5;
    std::uint64_t seed = 0;
    bool no_timing = false;
    auto* solve = app.add_subcommand("solve", "Run one iterative solver");
    solve_inst.attach(solve);
    solve->add_option("--algo", algo, "cd | mwu | fista | fw")->check(CLI::IsMember({"cd", "mwu", "fista", "fw"}));
    solve->add_option("--screen", screen, "none | d0 | d1 | d2 | b")->check(CLI::IsMember({"none", "d0", "d1", "d2", "b"}));
    solve->add_option("--period", period, "Screening period tau")->check(CLI::PositiveNumber);
    solve->add_option("--tol", tol, "Stop when the gap (or delta) is below tol")->check(CLI::PositiveNumber);
    solve->add_option("--max-iters", max_iters, "Iteration cap");
    solve->add_option("--seed", seed, "Seed for randomized initializations");
    solve->add_option("--mwu-exponent", mwu_exponent, "Exponent of the multiplicative update");
    solve->add_option("--out-design", out_design, "Design CSV (index,weight)");
    solve->add_option("--out-trace", out_trace, "Trace CSV");
    solve->add_option("--out-x", out_x, "Primal point CSV (p x r)");
    solve->add_option("--summary", summary_path, "Also write the JSON summary here");
    solve->add_flag("--no-timing", no_timing, "Write zero for elapsed times (byte-reproducible output)");

    // path
    InstanceArgs path_inst;
    double path_lambda = 0;
    bool path_full = false;
    std::string out_path, path_design, path_summary;
    auto* path = app.add_subcommand("path", "Exact regularization path (c-case)");
    path->add_option("--instance", path_inst.prefix, "Instance prefix");
    path->add_option("--A", path_inst.A_path, "Feature matrix CSV");
    path->add_option("--c", path_inst.c_path, "Target vector CSV");
    path->add_flag("--normalize", path_inst.normalize, "Scale every column of A to unit norm");
    path->add_option("--lambda", path_lambda, "Stop once the path passes this lambda and report the design");
    path->add_flag("--full", path_full, "Compute the path down to alpha = 0");
    path->add_option("--out-path", out_path, "Path CSV (k,alpha,lambda,nnz,active_indices)");
    path->add_option("--out-design", path_design, "Design CSV at --lambda");
    path->add_option("--summary", path_summary, "Also write the JSON summary here");

    // screen-report
    InstanceArgs sr_inst;
    std::string sr_rule = "d2", sr_design, sr_out;
    auto* sreport = app.add_subcommand("screen-report", "One-shot screening mask with per-candidate test values");
    sr_inst.attach(sreport);
    sreport->add_option("--rule", sr_rule, "d0 | d1 | d2 | b")->check(CLI::IsMember({"d0", "d1", "d2", "b"}));
    sreport->add_option("--design", sr_design, "Design CSV (index,weight); uniform if omitted");
    sreport->add_option("--out-mask", sr_out, "Mask CSV (index,value,eliminated)");

    // gen-imse
    imse::ImseSpec ispec;
    std::string kernel = "matern32", imse_out;
    auto* gen_imse = app.add_subcommand("gen-imse", "Build an IMSE L-optimal instance");
    gen_imse->add_option("--d", ispec.d, "Dimension");
    gen_imse->add_option("--grid", ispec.grid_n, "Regular grid with this many points per axis");
    gen_imse->add_option("--halton", ispec.lowdisc_count, "First points of the Halton sequence");
    gen_imse->add_option("--points-file", ispec.points_file, "Candidate points CSV (p x d)");
    gen_imse->add_option("--theta", ispec.theta, "Inverse range of the kernel")->check(CLI::PositiveNumber);
    gen_imse->add_option("--kernel", kernel, "matern12 | matern32 | matern52 | sqexp");
    gen_imse->add_option("--m", ispec.m, "Truncation level");
    gen_imse->add_option("--budget", ispec.budget, "Budget n, lambda = 1/n (default n = m)");
    gen_imse->add_option("--out-instance", imse_out, "Output prefix")->required();

    // gen-synthetic
    int syn_m = 100, syn_p = 2000, syn_r = 1;
    double syn_lambda = 0.4;
    std::uint64_t syn_seed = 0;
    bool syn_normalize = false;
    std::string syn_out;
    auto* gen_syn = app.add_subcommand("gen-synthetic", "Gaussian instance with N(0,1) entries");
    gen_syn->add_option("--m", syn_m)->check(CLI::PositiveNumber);
    gen_syn->add_option("--p", syn_p)->check(CLI::PositiveNumber);
    gen_syn->add_option("--r", syn_r, "Target columns")->check(CLI::PositiveNumber);
    gen_syn->add_option("--lambda", syn_lambda)->check(CLI::PositiveNumber);
    gen_syn->add_option("--seed", syn_seed);
    gen_syn->add_flag("--normalize", syn_normalize, "Unit-norm columns");
    gen_syn->add_option("--out-instance", syn_out, "Output prefix")->required();

    // verify
    InstanceArgs ver_inst;
    double ver_tol = 1e-8;
    std::uint64_t ver_seed = 0;
    auto* verify = app.add_subcommand("verify", "Brute-force optimality and mapping checks (p <= 7)");
    ver_inst.attach(verify);
    verify->add_option("--tol", ver_tol)->check(CLI::PositiveNumber);
    verify->add_option("--seed", ver_seed);

    // bench
    InstanceArgs bench_inst;
    std::string bench_algos = "cd,fista,mwu,fw,homotopy", bench_screens = "none", bench_out, trace_dir;
    double bench_tol = 1e-6;
    long bench_iters = 100000, bench_period = 10;
    bool bench_no_timing = false;
    auto* bench = app.add_subcommand("bench", "Run the solver roster and emit a timing table");
    bench_inst.attach(bench);
    bench->add_option("--algos", bench_algos, "Comma-separated subset of cd,fista,mwu,fw,homotopy");
    bench->add_option("--screens", bench_screens, "Comma-separated screening rules applied to each solver");
    bench->add_option("--tol", bench_tol)->check(CLI::PositiveNumber);
    bench->add_option("--max-iters", bench_iters);
    bench->add_option("--period", bench_period)->check(CLI::PositiveNumber);
    bench->add_option("--out-bench", bench_out, "Table CSV (algo,screen,lambda,time_s,iters,final_gap,value,status)");
    bench->add_option("--trace-dir", trace_dir, "Directory for per-run trace CSVs");
    bench->add_flag("--no-timing", bench_no_timing, "Write zero for times (byte-reproducible output)");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << version << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (*solve) {
            const auto loaded = solve_inst.load();
            for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
            const auto& inst = loaded.instance;
            SolverOptions<double> opts;
            opts.tol = tol;
            opts.max_iters = max_iters;
            opts.screen_rule = rule_names.at(screen);
            opts.screen_period = period;
            opts.seed = seed;
            opts.mwu_exponent = mwu_exponent;
            const auto res = run_with_screening(inst, algo_names.at(algo), opts);
            const Design<double> w = res.w ? *res.w : Design<double>::uniform(inst.p());

            if (!out_design.empty()) io::write_text_atomic(out_design, io::design_to_csv(w));
            if (!out_trace.empty()) io::write_text_atomic(out_trace, io::trace_to_csv(res.trace, !no_timing));
            if (!out_x.empty()) io::write_matrix_csv(out_x, res.X);

            json s = base_summary("solve");
            s["params"] = solve_inst.describe();
            s["params"]["algo"] = algo;
            s["params"]["screen"] = screen;
            s["params"]["period"] = period;
            s["params"]["tol"] = tol;
            s["params"]["max_iters"] = max_iters;
            s["params"]["mwu_exponent"] = mwu_exponent;
            s["seed"] = seed;
            s["instance"] = instance_shape(inst);
            s["status"] = res.converged() ? "converged" : "not_converged";
            s["iterations"] = res.iterations;
            s["value"] = res.value;
            s["gap_or_delta"] = res.gap_or_delta;
            s["surviving"] = res.mask.index_map.size();
            s["support"] = (w.weights().array() > 0).count();
            s["elapsed_s"] = (no_timing || res.trace.records.empty()) ? 0.0 : res.trace.records.back().elapsed_s;
            emit(out, s, summary_path);
            return res.converged() ? 0 : 2;
        }

        if (*path) {
            if (!path_full && !(path_lambda > 0)) throw Error(ErrorCode::InvalidOptions, "give --lambda or --full");
            io::LoadedInstance loaded = [&] {
                if (!path_inst.prefix.empty()) return io::load_instance_prefix(path_inst.prefix, path_inst.normalize);
                // The path itself does not depend on lambda.
                InstanceArgs a = path_inst;
                a.lambda = path_lambda > 0 ? path_lambda : 1.0;
                return a.load();
            }();
            const auto& inst = loaded.instance;
            const auto hp = lasso_path(inst, path_full ? 0.0 : path_lambda, path_full);
            if (!out_path.empty()) io::write_text_atomic(out_path, io::path_to_csv(hp));

            json s = base_summary("path");
            s["params"] = json{{"lambda", path_lambda}, {"full", path_full}};
            s["instance"] = instance_shape(inst);
            s["breakpoints"] = hp.breakpoints.size();
            s["termination"] = to_string(hp.termination);
            if (path_lambda > 0) {
                const std::size_t k = hp.segment_of(path_lambda);
                const auto [tk, tk1] = segment_coefficients(hp, k, path_lambda);
                const Mat<double> x = tk * hp.breakpoints[k].x + tk1 * hp.breakpoints[k + 1].x;
                const ProblemInstance<double> at(inst.A(), inst.K(), path_lambda);
                const Design<double> w = segment_weights(hp, path_lambda);
                if (!path_design.empty()) io::write_text_atomic(path_design, io::design_to_csv(w));
                s["segment"] = k + 1;
                s["value"] = primal_objective(at, x);
                s["kkt_residual"] = kkt_residual(at, x);
                s["support"] = (w.weights().array() > 0).count();
            }
            emit(out, s, path_summary);
            return hp.termination == PathTermination::Degenerate ? 2 : 0;
        }

        if (*sreport) {
            const auto loaded = sr_inst.load();
            const auto& inst = loaded.instance;
            Design<double> w = Design<double>::uniform(inst.p());
            if (!sr_design.empty()) {
                const Mat<double> D = io::read_csv(sr_design);
                if (D.cols() != 2 || D.rows() != inst.p())
                    throw Error(ErrorCode::ParseError, sr_design + ": expected p rows of index,weight");
                w = Design<double>(D.col(1));
            }
            ScreeningMask<double> mask;
            const auto rule = rule_names.at(sr_rule);
            if (rule == ScreeningRule::D0) mask = screen_d0(inst, dual_certificate(inst, w));
            else if (rule == ScreeningRule::D1) mask = screen_d1(inst, hat_x(inst, w));
            else if (rule == ScreeningRule::D2) mask = screen_d2(inst, w);
            else mask = bound_B(inst, w);
            const std::string csv = io::mask_to_csv(mask);
            if (!sr_out.empty()) io::write_text_atomic(sr_out, csv);
            json s = base_summary("screen-report");
            s["rule"] = sr_rule;
            s["instance"] = instance_shape(inst);
            s["eps_used"] = mask.eps_used;
            s["eliminated"] = mask.num_eliminated();
            s["surviving"] = mask.index_map.size();
            emit(out, s, "");
            if (sr_out.empty()) out << csv;
            return 0;
        }

        if (*gen_imse) {
            ispec.kernel = imse::parse_kernel(kernel);
            const auto gi = imse::generate(ispec);
            const ProblemInstance<double> inst(gi.A, gi.K, gi.lambda);
            io::save_instance(imse_out, inst);
            io::write_matrix_csv(imse_out + "_points.csv", gi.points);
            json meta = base_summary("gen-imse");
            meta["kernel"] = kernel;
            meta["theta"] = ispec.theta;
            meta["d"] = ispec.d;
            meta["m"] = ispec.m;
            meta["p"] = gi.points.rows();
            meta["budget"] = gi.budget;
            meta["lambda"] = gi.lambda;
            std::vector<double> ev(gi.eigenvalues.data(), gi.eigenvalues.data() + ispec.m);
            meta["leading_eigenvalues"] = ev;
            meta["min_sigma2"] = gi.sigma2.minCoeff();
            io::write_text_atomic(imse_out + "_meta.json", meta.dump(2) + "\n");
            out << meta.dump(2) << "\n";
            return 0;
        }

        if (*gen_syn) {
            std::mt19937_64 rng(syn_seed);
            std::normal_distribution<double> nd(0.0, 1.0);
            Mat<double> A(syn_m, syn_p), K(syn_m, syn_r);
            for (Eigen::Index j = 0; j < A.cols(); ++j)
                for (Eigen::Index i = 0; i < A.rows(); ++i) A(i, j) = nd(rng);
            for (Eigen::Index j = 0; j < K.cols(); ++j)
                for (Eigen::Index i = 0; i < K.rows(); ++i) K(i, j) = nd(rng);
            if (syn_normalize) io::normalize_columns(A);
            io::save_instance(syn_out, ProblemInstance<double>(A, K, syn_lambda));
            json s = base_summary("gen-synthetic");
            s["seed"] = syn_seed;
            s["instance"] = json{{"m", syn_m}, {"p", syn_p}, {"r", syn_r}, {"lambda", syn_lambda}};
            s["normalize"] = syn_normalize;
            out << s.dump(2) << "\n";
            return 0;
        }

        if (*verify) {
            const auto loaded = ver_inst.load();
            const auto& inst = loaded.instance;
            if (inst.p() > 7) throw Error(ErrorCode::TooLargeForOracle, "verify is limited to p <= 7");
            json s = base_summary("verify");
            s["instance"] = instance_shape(inst);
            s["tol"] = ver_tol;
            bool ok = true;
            auto check = [&](const std::string& name, bool pass, double magnitude) {
                s["checks"][name] = json{{"result", pass ? "pass" : "fail"}, {"value", magnitude}};
                ok = ok && pass;
            };
            const auto opt = inst.is_c_case() ? oracle_qlasso_signs(inst) : oracle_group_support(inst);
            const auto rep = verify_optimal_pair(inst, opt.x, ver_tol);
            check("oracle_gap", rep.gap <= ver_tol, rep.gap);
            check("oracle_kkt", rep.kkt_residual <= ver_tol, rep.kkt_residual);
            check("oracle_delta", rep.delta <= ver_tol, rep.delta);
            if (inst.is_c_case()) {
                const auto mr = verify_mappings(inst, ver_tol, ver_seed);
                s["pathological"] = mr.pathological;
                check("value_identity", mr.value_ok, std::max(mr.value_identity, mr.delta_at_w));
                check("hat_x_value", mr.hat_x_ok, mr.hat_x_value);
                check("certificate_lemma", mr.lemma_ok, mr.lemma);
                check("dual_point", mr.dual_ok, mr.dual_identity);
            }
            SolverOptions<double> opts;
            opts.tol = 1e-12;
            const auto cd = solve_cd(inst, opts);
            const double diff = std::abs(cd.value - opt.value) / (1 + std::abs(opt.value));
            check("cd_matches_oracle", diff <= 1e-7, diff);
            s["status"] = ok ? "pass" : "fail";
            out << s.dump(2) << "\n";
            return ok ? 0 : 2;
        }

        if (*bench) {
            const auto loaded = bench_inst.load();
            const auto& inst = loaded.instance;
            struct Job { std::string algo, screen; };
            std::vector<Job> jobs;
            auto split = [](const std::string& s) {
                std::vector<std::string> parts;
                std::stringstream ss(s);
                std::string item;
                while (std::getline(ss, item, ',')) if (!item.empty()) parts.push_back(item);
                return parts;
            };
            for (const auto& a : split(bench_algos)) {
                if (a == "homotopy") {
                    if (inst.is_c_case()) jobs.push_back({a, "none"});
                    continue;
                }
                if (!algo_names.count(a)) throw Error(ErrorCode::InvalidOptions, "unknown algorithm '" + a + "'");
                for (const auto& r : split(bench_screens)) {
                    if (!rule_names.count(r)) throw Error(ErrorCode::InvalidOptions, "unknown rule '" + r + "'");
                    jobs.push_back({a, r});
                }
            }

            std::vector<BenchRow> rows(jobs.size());
            auto run_job = [&](std::size_t i) {
                const auto& job = jobs[i];
                BenchRow row;
                row.algo = job.algo;
                row.screen = job.screen;
                const auto t0 = std::chrono::steady_clock::now();
                if (job.algo == "homotopy") {
                    try {
                        const auto hs = solve_homotopy(inst, inst.lambda());
                        row.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                        row.iters = static_cast<long>(hs.segment + 2);
                        row.gap = dual_certificate(inst, Mat<double>(hs.x)).eps;
                        row.value = primal_objective(inst, Mat<double>(hs.x));
                        row.status = "exact";
                    } catch (const Error& e) {
                        row.status = std::string("error:") + to_string(e.code());
                    }
                } else {
                    SolverOptions<double> opts;
                    opts.tol = bench_tol;
                    opts.max_iters = bench_iters;
                    opts.screen_rule = rule_names.at(job.screen);
                    opts.screen_period = bench_period;
                    const auto res = run_with_screening(inst, algo_names.at(job.algo), opts);
                    row.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    row.iters = res.iterations;
                    row.gap = res.gap_or_delta;
                    row.value = res.value;
                    row.status = res.converged() ? "converged" : "not_converged";
                    row.trace = io::trace_to_csv(res.trace, !bench_no_timing);
                }
                if (bench_no_timing) row.time_s = 0;
                rows[i] = std::move(row);
            };

            const unsigned workers = thread_budget(jobs.size());
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            std::exception_ptr failure;
            std::mutex failure_mutex;
            for (unsigned t = 0; t < workers; ++t) {
                pool.emplace_back([&] {
                    for (std::size_t i; (i = next++) < jobs.size();) {
                        try {
                            run_job(i);
                        } catch (...) {
                            std::lock_guard<std::mutex> lock(failure_mutex);
                            if (!failure) failure = std::current_exception();
                        }
                    }
                });
            }
            for (auto& th : pool) th.join();
            if (failure) std::rethrow_exception(failure);

            std::string csv = "algo,screen,lambda,time_s,iters,final_gap,value,status\n";
            for (const auto& r : rows) {
                csv += r.algo + "," + r.screen + "," + io::format_double(inst.lambda()) + "," +
                       io::format_double(r.time_s) + "," + std::to_string(r.iters) + "," + io::format_double(r.gap) +
                       "," + io::format_double(r.value) + "," + r.status + "\n";
                if (!trace_dir.empty() && !r.trace.empty())
                    io::write_text_atomic(trace_dir + "/trace_" + r.algo + "_" + r.screen + ".csv", r.trace);
            }
            if (!bench_out.empty()) io::write_text_atomic(bench_out, csv);
            out << csv;
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int run_cli(int argc, char** argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace qdesign::cli
