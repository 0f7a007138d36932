#include "platefsi/io.hpp"
#include "platefsi/effective_tensors.hpp"
#include "platefsi/microcell.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace platefsi;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = PLATEFSI_CLI_PATH;

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() / ("platefsi_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Sandbox() { fs::remove_all(dir); }
};

int run(const std::string& args, const fs::path& capture = {}) {
    std::string cmd = kCli.string() + " " + args;
    if (!capture.empty())
        cmd += " > " + capture.string() + " 2>&1";
    else
        cmd += " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

void write_full_solid(const fs::path& p, int n) {
    MicrostructureSpec spec;
    spec.dimension = 3;
    spec.resolution = {n, n, n};
    spec.indicator.assign(static_cast<std::size_t>(n * n * n), 1);
    spec.material.kind = MaterialModel::Kind::uniform_lame;
    spec.material.lame = {1.0, 1.0};
    spec.allow_uniform = true;
    write_microstructure(spec, p);
}

} // namespace

TEST_CASE("validate: all-solid cell exits 0 with the clearance warning") {
    Sandbox sb;
    write_full_solid(sb.dir / "cell.json", 2);
    const auto out = sb.dir / "out.txt";
    CHECK(run("validate " + (sb.dir / "cell.json").string(), out) == 0);
    const auto text = read_text_file(out);
    CHECK(text.find("s_clearance") != std::string::npos);
    CHECK(text.find("warn") != std::string::npos);
}

TEST_CASE("exit codes: usage, missing file, parse error, validation failure") {
    Sandbox sb;
    CHECK(run("frobnicate x") == 1);
    CHECK(run("validate " + (sb.dir / "nope.json").string()) == 2);
    write_text_file(sb.dir / "bad.json", "{not json");
    CHECK(run("validate " + (sb.dir / "bad.json").string()) == 3);
    // isolated island: hard validation failure
    MicrostructureSpec island;
    island.dimension = 3;
    island.resolution = {4, 4, 4};
    island.indicator.assign(64, 0);
    island.indicator[static_cast<std::size_t>(island.voxel_index(1, 1, 1))] = 1;
    island.material.kind = MaterialModel::Kind::uniform_lame;
    island.material.lame = {1.0, 1.0};
    write_microstructure(island, sb.dir / "island.json");
    CHECK(run("validate " + (sb.dir / "island.json").string()) == 4);
}

TEST_CASE("cell then tensors reproduces the closed-form entry") {
    Sandbox sb;
    // handwritten non-canonical formatting: the pipeline must not depend on
    // the input byte layout
    {
        std::ofstream out(sb.dir / "cell.json");
        out << "{\"dimension\":3,\"resolution\":[4,4,4],\"indicator\":[";
        for (int i = 0; i < 64; ++i)
            out << (i ? ",1" : "1");
        out << "],\"material\":{\"lame\":[1,1]},\"allow_uniform\":true}";
    }
    const auto cells = sb.dir / "cells";
    REQUIRE(run("cell " + (sb.dir / "cell.json").string() + " -o " + cells.string() +
                " --jobs 2 --tol 1e-12") == 0);
    const auto cell_manifest = read_json_file(cells / "manifest.json");
    CHECK(cell_manifest.at("outputs").size() == 13); // spec + 6 x (bin + vtk)
    REQUIRE(run("tensors " + cells.string()) == 0);
    const auto t = read_tensors(cells / "tensors.json");
    CHECK(t.a_entry(1, 1, 1, 1) == doctest::Approx(8.0 / 3.0).epsilon(1e-8));
    CHECK(t.a_entry(1, 1, 2, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-8));
    const auto audit = read_json_file(cells / "audit.json");
    CHECK(audit.at("pass").get<bool>());
    const auto manifest = read_json_file(cells / "manifest.json");
    CHECK(manifest.at("subcommand") == "tensors");
}

TEST_CASE("macro runs are byte-identical across reruns") {
    Sandbox sb;
    nlohmann::json cfg;
    cfg["H"] = 1.0;
    cfg["L"] = 2.0;
    cfg["nx"] = 6;
    cfg["nz"] = 3;
    cfg["n_plate"] = 8;
    cfg["dt"] = 0.02;
    cfg["T"] = 0.06;
    cfg["a_star"] = 2.0;
    cfg["b_star"] = 0.0;
    cfg["c_star"] = 1.0;
    cfg["forcing"] = {{"g", "sin(pi*x/2)"}};
    write_json_file(sb.dir / "macro.json", cfg);
    REQUIRE(run("macro " + (sb.dir / "macro.json").string() + " -o " +
                (sb.dir / "run_a").string()) == 0);
    REQUIRE(run("macro " + (sb.dir / "macro.json").string() + " -o " +
                (sb.dir / "run_b").string()) == 0);
    CHECK(read_text_file(sb.dir / "run_a/series.csv") ==
          read_text_file(sb.dir / "run_b/series.csv"));
    CHECK(read_text_file(sb.dir / "run_a/run.json") == read_text_file(sb.dir / "run_b/run.json"));
}

TEST_CASE("micro and compare pipeline with one epsilon emits the slope notice") {
    Sandbox sb;
    // 2D slab cell for the layer
    MicrostructureSpec cell;
    cell.dimension = 2;
    cell.resolution = {4, 8, 0};
    cell.indicator.assign(32, 0);
    for (int i = 0; i < 4; ++i)
        for (int k = 2; k < 6; ++k)
            cell.indicator[static_cast<std::size_t>(cell.voxel_index(i, 0, k))] = 1;
    cell.material.kind = MaterialModel::Kind::uniform_lame;
    cell.material.lame = {1.0, 1.0};
    write_microstructure(cell, sb.dir / "layer.json");

    nlohmann::json mc;
    mc["epsilon_inverse"] = 2;
    mc["layer_cell_file"] = "layer.json";
    mc["H"] = 1.0;
    mc["L"] = 1.0;
    mc["nz_bulk"] = 3;
    mc["dt"] = 0.02;
    mc["T"] = 0.04;
    mc["forcing"] = {{"f_layer", {"0", "sin(pi*x)"}}};
    write_json_file(sb.dir / "micro.json", mc);
    REQUIRE(run("micro " + (sb.dir / "micro.json").string() + " -o " +
                (sb.dir / "mrun").string()) == 0);
    CHECK(fs::exists(sb.dir / "mrun/apriori.csv"));

    nlohmann::json cfg;
    cfg["H"] = 1.0;
    cfg["L"] = 1.0;
    cfg["nx"] = 6;
    cfg["nz"] = 3;
    cfg["n_plate"] = 8;
    cfg["dt"] = 0.02;
    cfg["T"] = 0.04;
    cfg["a_star"] = 2.0;
    cfg["b_star"] = 0.0;
    cfg["c_star"] = 1.0;
    cfg["forcing"] = {{"g", "sin(pi*x)"}};
    write_json_file(sb.dir / "macro.json", cfg);
    REQUIRE(run("macro " + (sb.dir / "macro.json").string() + " -o " +
                (sb.dir / "arun").string()) == 0);
    REQUIRE(run("compare " + (sb.dir / "arun").string() + " " + (sb.dir / "mrun").string() +
                " -o " + (sb.dir / "cmp").string()) == 0);
    const auto csv = read_text_file(sb.dir / "cmp/errors.csv");
    CHECK(csv.find("slope,unavailable") != std::string::npos);
    CHECK(csv.find("layer_pressure_l2") != std::string::npos);
}

TEST_CASE("tensors stage rejects stale cell solutions") {
    Sandbox sb;
    write_full_solid(sb.dir / "cell.json", 2);
    const auto cells = sb.dir / "cells";
    REQUIRE(run("cell " + (sb.dir / "cell.json").string() + " -o " + cells.string()) == 0);
    // tamper with the cell description after the solves
    auto spec = parse_microstructure(cells / "cell_spec.json");
    spec.material.lame = {2.0, 1.0};
    write_microstructure(spec, cells / "cell_spec.json");
    CHECK(run("tensors " + cells.string()) == 4);
}

TEST_CASE("micro accepts several configs and runs them concurrently") {
    Sandbox sb;
    MicrostructureSpec cell;
    cell.dimension = 2;
    cell.resolution = {2, 4, 0};
    cell.indicator.assign(8, 0);
    for (int i = 0; i < 2; ++i)
        for (int k = 1; k < 3; ++k)
            cell.indicator[static_cast<std::size_t>(cell.voxel_index(i, 0, k))] = 1;
    cell.material.kind = MaterialModel::Kind::uniform_lame;
    cell.material.lame = {1.0, 1.0};
    write_microstructure(cell, sb.dir / "layer.json");
    for (int k : {2, 4}) {
        nlohmann::json mc;
        mc["epsilon_inverse"] = k;
        mc["layer_cell_file"] = "layer.json";
        mc["H"] = 0.5;
        mc["L"] = 1.0;
        mc["nz_bulk"] = 2;
        mc["dt"] = 0.02;
        mc["T"] = 0.04;
        mc["forcing"] = {{"f_layer", {"0", "sin(pi*x)"}}};
        write_json_file(sb.dir / ("m" + std::to_string(k) + ".json"), mc);
    }
    REQUIRE(run("micro " + (sb.dir / "m2.json").string() + " " + (sb.dir / "m4.json").string() +
                " --jobs 2 -o " + sb.dir.string()) == 0);
    CHECK(fs::exists(sb.dir / "m2_micro/run.json"));
    CHECK(fs::exists(sb.dir / "m4_micro/apriori.csv"));
}

TEST_CASE("random-cell writes an admissible spec") {
    Sandbox sb;
    const auto out = sb.dir / "random.json";
    REQUIRE(run("random-cell -o " + out.string() + " --seed 7 --resolution 6") == 0);
    const auto spec = parse_microstructure(out);
    CHECK(validate_geometry(build_cell_mesh(spec)).ok());
}
