#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <vector>

#include "rate_alloc/allocation.hpp"
#include "rate_alloc/error.hpp"
#include "rate_alloc/kl_solver.hpp"
#include "rate_alloc/multistage.hpp"
#include "rate_alloc/report.hpp"
#include "rate_alloc/sensing.hpp"
#include "rate_alloc/synthetic.hpp"

namespace rate_alloc::cli {

using nlohmann::json;

namespace {

constexpr double kVerifyTolerance = 1e-8;

Image input_image(const RunConfig& config) {
    if (config.synthetic) {
        return synthetic_image(parse_synthetic_kind(*config.synthetic), 96, config.block_size);
    }
    if (!config.image) throw InputError("either --image or --synthetic is required");
    if (!std::filesystem::exists(*config.image)) {
        throw InputError("image file not found: " + config.image->string());
    }
    return load_pgm(*config.image);
}

void prepare_out(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_json(const std::filesystem::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::string format_db(double db) {
    if (psnr_identical(db)) return "identical";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", db);
    return buf;
}

std::vector<double> as_doubles(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

std::optional<double> allocation_kl(const std::vector<double>& true_bounds, const std::vector<std::int64_t>& counts) {
    double total = 0.0;
    for (double m : true_bounds) total += m;
    if (!(total > 0.0)) return std::nullopt;
    return kl_diagnostic(true_bounds, as_doubles(counts)).kl;
}

}  // namespace

CurveParams parse_curve(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) throw InputError("");
        } catch (const std::exception&) {
            throw InputError("--curve expects four numbers a,b,sr1,ps1; got '" + text + "'");
        }
    }
    if (values.size() != 4) throw InputError("--curve expects four numbers a,b,sr1,ps1; got '" + text + "'");
    CurveParams c{values[0], values[1], values[2], values[3]};
    c.validate();
    return c;
}

int cmd_analyze(const RunConfig& config) {
    const Image image = input_image(config);
    const ImageAnalysis analysis = analyze_image(image, config.block_size, config.rate, config.curve);
    prepare_out(config.out);
    const auto& g = analysis.grid;
    write_file_atomic(config.out / "sparsity.csv", csv_grid(std::span<const std::size_t>(analysis.sparsity.per_block_k), g.rows, g.cols));
    write_file_atomic(config.out / "bounds.csv", csv_grid(std::span<const double>(analysis.bounds.per_block_m), g.rows, g.cols));
    json summary = analysis_summary(analysis);
    summary["rate"] = config.rate;
    write_json(config.out / "analysis.json", summary);
    std::cout << "threshold " << analysis.sparsity.threshold << "\n"
              << "sparsity ratio " << analysis.sparsity.overall_ratio << " (target " << analysis.target_ps << ")\n"
              << "sum of bounds " << analysis.bounds.total() << "\n";
    return kOk;
}

int cmd_allocate(const RunConfig& config) {
    const Image image = input_image(config);
    const AllocationPlan plan = config.uniform ? uniform_plan(image, config.block_size, config.rate)
                                              : single_stage_plan(image, config.block_size, config.rate, config.curve);
    prepare_out(config.out);
    write_json(config.out / "plan.json", to_json(plan));
    write_file_atomic(config.out / "allocation.csv",
                      csv_grid(std::span<const std::int64_t>(plan.per_block_M), plan.grid_rows, plan.grid_cols));
    std::int64_t sum = 0;
    for (auto m : plan.per_block_M) sum += m;
    std::cout << "total measurements " << sum << " (budget " << plan.total_budget << ")\n"
              << "implied eta " << plan.implied_eta << "\n";
    return kOk;
}

int cmd_simulate(const RunConfig& config) {
    const Image image = input_image(config);
    const MeasurementMatrix matrix = build_matrix(config.block_size, config.seed);
    SimulationConfig sim{config.block_size, config.rate, config.stages, config.curve};
    const ImageAnalysis analysis = analyze_image(image, config.block_size, config.rate, config.curve);
    const auto predictor = make_predictor(config.predictor, analysis);
    const MultiStagePlan plan = run_simulation(image, sim, *predictor, matrix);
    const Image recon = reconstruct_plan(plan.shape(), plan.records, matrix);
    const double db = psnr(image, recon);

    prepare_out(config.out);
    json j = to_json(plan);
    j["seed"] = config.seed;
    j["psnr"] = psnr_identical(db) ? json("identical") : json(db);
    write_json(config.out / "simulation.json", j);
    for (const auto& st : plan.stages) {
        write_file_atomic(config.out / ("stage_" + std::to_string(st.stage_index) + "_M.csv"),
                          csv_grid(std::span<const std::int64_t>(st.stage_M), plan.grid_rows, plan.grid_cols));
    }
    write_file_atomic(config.out / "final_M.csv",
                      csv_grid(std::span<const std::int64_t>(plan.final_M), plan.grid_rows, plan.grid_cols));
    save_pgm(recon, config.out / "reconstruction.pgm");

    for (const auto& st : plan.stages) {
        std::cout << "stage " << st.stage_index << ": budget " << st.stage_budget;
        if (st.skipped) std::cout << " (skipped)";
        if (st.stage_index > 1 && !st.skipped) std::cout << ", alpha " << st.alpha << ", beta " << st.beta;
        std::cout << "\n";
    }
    std::cout << "total measurements " << plan.total_measurements() << "\n"
              << "PSNR " << format_db(db) << " dB\n";
    return kOk;
}

int cmd_compare(const RunConfig& config) {
    const Image image = input_image(config);
    const MeasurementMatrix matrix = build_matrix(config.block_size, config.seed);
    const ImageAnalysis analysis = analyze_image(image, config.block_size, config.rate, config.curve);
    const auto predictor = make_predictor(config.predictor, analysis);

    const AllocationPlan uniform = uniform_plan(image, config.block_size, config.rate);
    const AllocationPlan single = single_stage_plan(analysis, image.height(), image.width(), config.rate);
    SimulationConfig sim{config.block_size, config.rate, config.stages, config.curve};
    const MultiStagePlan multi = run_simulation(image, sim, *predictor, matrix);

    const GridShape shape{config.block_size, analysis.grid.rows, analysis.grid.cols, image.height(), image.width()};
    auto single_stage_psnr = [&](const AllocationPlan& plan) {
        return psnr(image, reconstruct_plan(shape, sample_blocks(matrix, analysis.grid, plan.per_block_M), matrix));
    };

    struct Row {
        std::string name;
        std::int64_t measurements;
        double db;
        std::optional<double> kl;
    };
    auto total = [](const std::vector<std::int64_t>& v) {
        std::int64_t s = 0;
        for (auto x : v) s += x;
        return s;
    };
    const auto& truth = analysis.bounds.per_block_m;
    std::vector<Row> rows{
        {"uniform", total(uniform.per_block_M), single_stage_psnr(uniform), allocation_kl(truth, uniform.per_block_M)},
        {"single-stage", total(single.per_block_M), single_stage_psnr(single), allocation_kl(truth, single.per_block_M)},
        {std::to_string(config.stages) + "-stage " + predictor->name(), multi.total_measurements(),
         psnr(image, reconstruct_plan(multi.shape(), multi.records, matrix)), allocation_kl(truth, multi.final_M)},
    };

    json report = json::array();
    std::printf("%-22s %14s %12s %14s\n", "method", "measurements", "PSNR (dB)", "KL to bounds");
    for (const auto& r : rows) {
        const std::string kl = r.kl ? [&] {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", *r.kl);
            return std::string(buf);
        }()
                                    : std::string("n/a");
        std::printf("%-22s %14lld %12s %14s\n", r.name.c_str(), static_cast<long long>(r.measurements),
                    format_db(r.db).c_str(), kl.c_str());
        report.push_back({{"method", r.name},
                          {"measurements", r.measurements},
                          {"psnr", psnr_identical(r.db) ? json("identical") : json(r.db)},
                          {"kl", r.kl ? json(*r.kl) : json(nullptr)}});
    }
    prepare_out(config.out);
    write_json(config.out / "compare.json", {{"rate", config.rate}, {"seed", config.seed}, {"rows", report}});
    return kOk;
}

int cmd_solve(const std::filesystem::path& problem_path, bool verify, const std::optional<std::filesystem::path>& out) {
    json input;
    try {
        input = json::parse(read_file(problem_path));
    } catch (const json::parse_error& e) {
        throw InputError(problem_path.string() + ": " + e.what());
    }
    const KlAllocProblem problem = problem_from_json(input);
    const KlAllocSolution solution = solve(problem);
    json result = to_json(solution);

    int code = kOk;
    if (verify) {
        const KlAllocSolution reference = oracle_solve(problem);
        double gap = 0.0;
        for (std::size_t i = 0; i < solution.q.size(); ++i) {
            gap = std::max(gap, std::abs(solution.q[i] - reference.q[i]));
        }
        const double residual = kkt_residual(problem, solution.q, solution.mu_star);
        const bool ok = gap <= kVerifyTolerance && residual <= kVerifyTolerance;
        result["verify"] = {{"oracle_gap", gap}, {"kkt_residual", residual}, {"passed", ok}};
        if (!ok) code = kVerificationFailed;
    }
    const std::string text = result.dump(2) + "\n";
    if (out) {
        prepare_out(out->parent_path().empty() ? "." : out->parent_path());
        write_file_atomic(*out, text);
    }
    std::cout << text;
    if (code == kVerificationFailed) std::cerr << "verification failed\n";
    return code;
}

}  // namespace rate_alloc::cli
