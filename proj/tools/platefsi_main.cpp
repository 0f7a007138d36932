// Command-line front end: validate / cell / tensors / macro / micro / compare
// plus a seeded random-cell generator. Stages communicate through files only;
// every stage writes a manifest with content hashes of its outputs.

#include "platefsi/correctors.hpp"
#include "platefsi/errors.hpp"
#include "platefsi/io.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>
#include <thread>

using namespace platefsi;

namespace {

constexpr const char* kVersion = "platefsi 0.1.0";

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void require_file(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p))
        throw IoError("missing input file: " + p.string());
}

void export_cell_solution_vtk(const CellMesh& mesh, const CellSolution& sol,
                              const std::filesystem::path& path) {
    VtkStructuredGrid grid;
    const int n1 = mesh.res[0], n2 = mesh.res[1], n3 = mesh.res[2];
    for (int i = 0; i <= n1; ++i)
        grid.xs.push_back(i * mesh.h(0));
    if (mesh.dim == 3)
        for (int j = 0; j <= n2; ++j)
            grid.ys.push_back(j * mesh.h(1));
    for (int k = 0; k <= n3; ++k)
        grid.zs.push_back(-1.0 + k * mesh.h(2));
    VtkStructuredGrid::PointField disp{"displacement", 3, {}};
    VtkStructuredGrid::CellField phase{"solid", {}};
    // VTK structured order: x fastest, then y, then z
    for (int k = 0; k <= n3; ++k)
        for (int j = 0; j <= (mesh.dim == 3 ? n2 : 0); ++j)
            for (int i = 0; i <= n1; ++i) {
                const int node = mesh.node_id(i, j, k);
                if (mesh.dim == 3) {
                    disp.values.push_back(sol.displacement(3 * node));
                    disp.values.push_back(sol.displacement(3 * node + 1));
                    disp.values.push_back(sol.displacement(3 * node + 2));
                } else {
                    disp.values.push_back(sol.displacement(2 * node));
                    disp.values.push_back(0.0);
                    disp.values.push_back(sol.displacement(2 * node + 1));
                }
            }
    for (int k = 0; k < n3; ++k)
        for (int j = 0; j < n2; ++j)
            for (int i = 0; i < n1; ++i)
                phase.values.push_back(
                    mesh.elem_solid[static_cast<std::size_t>(mesh.elem_id(i, j, k))] ? 1.0 : 0.0);
    grid.point_fields.push_back(std::move(disp));
    grid.cell_fields.push_back(std::move(phase));
    grid.write(path);
}

int run_validate(const std::filesystem::path& input, const std::filesystem::path& outdir) {
    require_file(input);
    const auto spec = parse_microstructure(input);
    const auto mesh = build_cell_mesh(spec);
    const auto report = validate_geometry(mesh);
    std::cout << report.to_json().dump(2) << "\n";
    if (!outdir.empty()) {
        std::filesystem::create_directories(outdir);
        RunManifest manifest;
        manifest.subcommand = "validate";
        manifest.inputs = {input.string()};
        manifest.output_dir = outdir.string();
        manifest.config_hash = hash_file(input);
        manifest.version = kVersion;
        write_json_file(outdir / "validation.json", report.to_json());
        manifest.record_output(outdir / "validation.json");
        manifest.write(outdir);
    }
    if (!report.ok())
        throw ValidationError("geometry validation failed");
    return 0;
}

int run_cell(const std::filesystem::path& input, const std::filesystem::path& outdir, int jobs,
             double tol) {
    require_file(input);
    RunManifest manifest;
    manifest.subcommand = "cell";
    manifest.inputs = {input.string()};
    manifest.output_dir = outdir.string();
    manifest.config_hash = hash_file(input);
    manifest.version = kVersion;

    const auto spec = parse_microstructure(input);
    const auto mesh = build_cell_mesh(spec);
    std::filesystem::create_directories(outdir);

    fem::SolveConfig cfg;
    cfg.tolerance = tol;
    cfg.max_iterations = 200000;
    Stopwatch sw;
    const auto solutions = solve_all_cell_problems(mesh, spec.material, cfg, jobs);
    manifest.timings_s.emplace_back("cell_solves", sw.seconds());

    write_microstructure(spec, outdir / "cell_spec.json");
    manifest.record_output(outdir / "cell_spec.json");
    // solutions are stamped with the canonical cell file the tensors stage
    // will hash, not the user's input bytes
    const std::string hash = hash_file(outdir / "cell_spec.json");
    for (const auto& sol : solutions) {
        const auto bin = outdir / ("cell_" + sol.load_case.name() + ".bin");
        write_cell_solution(sol, hash, cfg.tolerance, bin);
        manifest.record_output(bin);
        const auto vtk = outdir / ("cell_" + sol.load_case.name() + ".vtk");
        export_cell_solution_vtk(mesh, sol, vtk);
        manifest.record_output(vtk);
    }
    manifest.write(outdir);
    std::cout << "solved " << solutions.size() << " cell problems into " << outdir.string()
              << "\n";
    return 0;
}

int run_tensors(const std::filesystem::path& dir) {
    require_file(dir / "cell_spec.json");
    RunManifest manifest;
    manifest.subcommand = "tensors";
    manifest.inputs = {dir.string()};
    manifest.output_dir = dir.string();
    manifest.config_hash = hash_file(dir / "cell_spec.json");
    manifest.version = kVersion;

    const auto spec = parse_microstructure(dir / "cell_spec.json");
    const auto mesh = build_cell_mesh(spec);
    std::vector<CellSolution> solutions;
    double tol = 0.0;
    for (const auto& lc : cell_load_cases(mesh.dim)) {
        const auto bin = dir / ("cell_" + lc.name() + ".bin");
        require_file(bin);
        std::string hash;
        solutions.push_back(read_cell_solution(bin, &hash, &tol));
        if (hash != manifest.config_hash)
            throw ValidationError("stale cell solution " + bin.string() +
                                  ": geometry hash mismatch");
    }
    EffectivePlateTensors::Provenance prov;
    prov.geometry_hash = manifest.config_hash;
    prov.resolution = mesh.res;
    prov.solver_tolerance = tol;
    Stopwatch sw;
    const auto tensors = compute_tensors(mesh, spec.material, solutions, prov);
    manifest.timings_s.emplace_back("tensor_assembly", sw.seconds());
    const auto audit = audit_tensors(tensors);
    write_tensors(tensors, dir / "tensors.json");
    write_json_file(dir / "audit.json", audit.to_json());
    manifest.record_output(dir / "tensors.json");
    manifest.record_output(dir / "audit.json");
    manifest.write(dir);
    std::cout << audit.to_json().dump(2) << "\n";
    return 0;
}

int run_macro_stage(const std::filesystem::path& input, std::filesystem::path outdir) {
    require_file(input);
    const auto cfg = MacroConfig::from_json(read_json_file(input), input.parent_path());
    if (outdir.empty())
        outdir = input.stem().string() + "_macro";
    RunManifest manifest;
    manifest.subcommand = "macro";
    manifest.inputs = {input.string()};
    manifest.output_dir = outdir.string();
    manifest.config_hash = hash_file(input);
    manifest.version = kVersion;
    Stopwatch sw;
    const auto run = run_macro(cfg);
    manifest.timings_s.emplace_back("macro_run", sw.seconds());
    write_macro_run(run, outdir);
    for (const char* f : {"run.json", "series.csv", "states.bin"})
        manifest.record_output(outdir / f);
    manifest.write(outdir);
    std::cout << "macro run: " << run.snapshots.size() - 1 << " steps into " << outdir.string()
              << "\n";
    return 0;
}

void run_one_micro(const std::filesystem::path& input, const std::filesystem::path& outdir,
                   double tol) {
    require_file(input);
    auto cfg = MicroConfig::from_json(read_json_file(input), input.parent_path());
    if (tol > 0.0)
        cfg.solver.tolerance = tol;
    RunManifest manifest;
    manifest.subcommand = "micro";
    manifest.inputs = {input.string()};
    manifest.output_dir = outdir.string();
    manifest.config_hash = hash_file(input);
    manifest.version = kVersion;
    Stopwatch sw;
    const auto run = run_micro(cfg);
    manifest.timings_s.emplace_back("micro_run", sw.seconds());
    write_micro_run(run, outdir);
    for (const char* f : {"run.json", "series.csv", "states.bin", "apriori.csv"})
        manifest.record_output(outdir / f);
    manifest.write(outdir);
}

/// Independent epsilon-runs execute concurrently, bounded by --jobs.
int run_micro_stage(const std::vector<std::string>& inputs, std::filesystem::path outbase,
                    int jobs, double tol) {
    std::vector<std::filesystem::path> outdirs;
    for (const auto& in : inputs) {
        const auto stem = std::filesystem::path(in).stem().string() + "_micro";
        outdirs.push_back(inputs.size() == 1 && !outbase.empty()
                              ? outbase
                              : (outbase.empty() ? std::filesystem::path(stem)
                                                 : outbase / stem));
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= inputs.size())
                return;
            try {
                run_one_micro(inputs[i], outdirs[i], tol);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    const int nthreads = std::clamp<int>(jobs, 1, static_cast<int>(inputs.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
    for (std::size_t i = 0; i < inputs.size(); ++i)
        std::cout << "micro run " << inputs[i] << " -> " << outdirs[i].string() << "\n";
    return 0;
}

int run_compare(const std::filesystem::path& macro_dir,
                const std::vector<std::string>& micro_dirs, const std::filesystem::path& cells,
                std::filesystem::path outdir) {
    require_file(macro_dir / "run.json");
    auto macro = std::make_shared<MacroRunResult>(read_macro_run(macro_dir));
    std::vector<MicroRunResult> micros;
    micros.reserve(micro_dirs.size());
    for (const auto& d : micro_dirs) {
        require_file(std::filesystem::path(d) / "run.json");
        micros.push_back(read_micro_run(d));
    }
    std::vector<const MicroRunResult*> micro_ptrs;
    for (const auto& m : micros)
        micro_ptrs.push_back(&m);

    std::optional<MicrostructureSpec> spec;
    CellMesh mesh;
    std::vector<CellSolution> solutions;
    if (!cells.empty()) {
        require_file(cells / "cell_spec.json");
        spec = parse_microstructure(cells / "cell_spec.json");
        mesh = build_cell_mesh(*spec);
        for (const auto& lc : cell_load_cases(mesh.dim))
            solutions.push_back(read_cell_solution(cells / ("cell_" + lc.name() + ".bin")));
    }

    if (outdir.empty())
        outdir = "compare_out";
    RunManifest manifest;
    manifest.subcommand = "compare";
    manifest.inputs = {macro_dir.string()};
    for (const auto& d : micro_dirs)
        manifest.inputs.push_back(d);
    manifest.output_dir = outdir.string();
    manifest.config_hash = hash_file(macro_dir / "run.json");
    manifest.version = kVersion;

    Stopwatch sw;
    const auto rep = compare_runs(macro, spec ? &mesh : nullptr,
                                  spec ? &solutions : nullptr, micro_ptrs);
    manifest.timings_s.emplace_back("compare", sw.seconds());
    std::filesystem::create_directories(outdir);
    write_text_file(outdir / "errors.csv", rep.to_csv());
    write_json_file(outdir / "compare.json", rep.to_json());
    manifest.record_output(outdir / "errors.csv");
    manifest.record_output(outdir / "compare.json");
    manifest.write(outdir);
    std::cout << rep.to_json().dump(2) << "\n";
    return 0;
}

int run_random_cell(int dim, int resolution, std::uint64_t seed,
                    const std::filesystem::path& out) {
    const auto spec = random_microstructure(dim, resolution, seed);
    write_microstructure(spec, out);
    std::cout << "wrote " << out.string() << " (" << spec.num_solid() << " solid of "
              << spec.num_voxels() << " voxels)\n";
    return 0;
}

int error_exit(int code, const char* kind, const std::string& message) {
    nlohmann::json j;
    j["error"] = {{"code", code}, {"kind", kind}, {"message", message}};
    std::cout << j.dump(2) << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Homogenized plate tensors and Stokes-plate interface runs"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string input, outdir, cells;
    std::vector<std::string> micro_dirs;
    int jobs = 1;
    double tol = 1e-10;
    double tol_override = 0.0; // 0 keeps the config's solver tolerance
    int dim = 3, resolution = 6;
    std::uint64_t seed = 1;

    auto* validate = app.add_subcommand("validate", "check a microstructure cell");
    validate->add_option("input", input)->required();
    validate->add_option("-o,--output-dir", outdir);

    auto* cell = app.add_subcommand("cell", "solve the periodic cell problems");
    cell->add_option("input", input)->required();
    cell->add_option("-o,--output-dir", outdir)->required();
    cell->add_option("--jobs", jobs);
    cell->add_option("--tol", tol);

    auto* tensors = app.add_subcommand("tensors", "assemble the effective plate tensors");
    tensors->add_option("dir", input)->required();

    auto* macro = app.add_subcommand("macro", "run the effective Stokes-plate model");
    macro->add_option("config", input)->required();
    macro->add_option("-o,--output-dir", outdir);

    std::vector<std::string> micro_configs;
    auto* micro = app.add_subcommand("micro", "run the epsilon-resolved reference model");
    micro->add_option("configs", micro_configs)->required()->expected(-1);
    micro->add_option("-o,--output-dir", outdir);
    micro->add_option("--jobs", jobs);
    micro->add_option("--tol", tol_override);

    auto* compare = app.add_subcommand("compare", "micro-to-macro error tables");
    compare->add_option("macro_run", input)->required();
    compare->add_option("micro_runs", micro_dirs)->required()->expected(-1);
    compare->add_option("--cells", cells);
    compare->add_option("-o,--output-dir", outdir);

    auto* random_cell = app.add_subcommand("random-cell", "seeded admissible random cell");
    random_cell->add_option("-o,--output-dir", outdir)->required();
    random_cell->add_option("--seed", seed);
    random_cell->add_option("--dim", dim);
    random_cell->add_option("--resolution", resolution);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return 0; // --help / --version
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (*validate)
            return run_validate(input, outdir);
        if (*cell)
            return run_cell(input, outdir, jobs, tol);
        if (*tensors)
            return run_tensors(input);
        if (*macro)
            return run_macro_stage(input, outdir);
        if (*micro)
            return run_micro_stage(micro_configs, outdir, jobs, tol_override);
        if (*compare)
            return run_compare(input, micro_dirs, cells, outdir);
        if (*random_cell)
            return run_random_cell(dim, resolution, seed, outdir);
        return 1;
    } catch (const IoError& e) {
        const std::string what = e.what();
        return error_exit(what.rfind("missing input file", 0) == 0 ||
                                  what.rfind("cannot open", 0) == 0
                              ? 2
                              : 6,
                          "io", what);
    } catch (const ParseError& e) {
        return error_exit(3, "parse", e.what());
    } catch (const DimensionError& e) {
        return error_exit(3, "config", e.what());
    } catch (const ValidationError& e) {
        return error_exit(4, "validation", e.what());
    } catch (const SolverError& e) {
        return error_exit(5, "solver", e.what());
    } catch (const Error& e) {
        return error_exit(6, "internal", e.what());
    }
}
