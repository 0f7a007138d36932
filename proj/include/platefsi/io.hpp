#ifndef PLATEFSI_IO_HPP
#define PLATEFSI_IO_HPP

#include <Eigen/Dense>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace platefsi {

/// FNV-1a content hash used for provenance and manifest entries.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);
std::string hash_file(const std::filesystem::path& path);

/// Fixed float formatting for reproducible data files: exponent format with
/// 17 significant digits.
std::string format_float(double v);

/// RFC-4180 CSV with '.' decimal separator and fixed float formatting.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(const std::vector<double>& values);
    void add_text_row(const std::vector<std::string>& fields);
    std::string str() const;
    void write(const std::filesystem::path& path) const;

private:
    std::string body_;
    std::size_t columns_ = 0;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Sorted-key UTF-8 JSON with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Legacy-ASCII VTK structured grid over tensor-product coordinates, with
/// point vector fields and cell scalar fields. Works for 2D (ys empty) and 3D.
struct VtkStructuredGrid {
    std::vector<double> xs, ys, zs; // ys empty in 2D
    struct PointField {
        std::string name;
        int components = 3;
        std::vector<double> values; // npoints * components
    };
    struct CellField {
        std::string name;
        std::vector<double> values;
    };
    std::vector<PointField> point_fields;
    std::vector<CellField> cell_fields;

    void write(const std::filesystem::path& path) const;
};

/// Binary time-series of dof vectors (one record per step).
struct RunStates {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;

    void write(const std::filesystem::path& path) const;
    static RunStates read(const std::filesystem::path& path);
};

/// Per-invocation record: stage, inputs, outputs with content hashes, wall
/// times. Written next to the stage outputs as manifest.json.
struct RunManifest {
    std::string subcommand;
    std::vector<std::string> inputs;
    std::string output_dir;
    std::string config_hash;
    std::string version;
    std::vector<std::pair<std::string, double>> timings_s;
    std::vector<std::pair<std::string, std::string>> outputs; // path, hash

    void record_output(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& dir) const;
};

} // namespace platefsi

#endif
