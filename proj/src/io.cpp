#include "platefsi/io.hpp"

#include "platefsi/errors.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace platefsi {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(data));
    return buf;
}

std::string hash_file(const std::filesystem::path& path) {
    return fnv1a64_hex(read_text_file(path));
}

std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    add_text_row(header);
}

void CsvWriter::add_row(const std::vector<double>& values) {
    std::vector<std::string> fields;
    fields.reserve(values.size());
    for (double v : values)
        fields.push_back(format_float(v));
    add_text_row(fields);
}

void CsvWriter::add_text_row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_)
        throw IoError("CsvWriter: row width " + std::to_string(fields.size()) +
                      " does not match header width " + std::to_string(columns_));
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            line += ',';
        const auto& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            line += '"';
            for (char c : f) {
                if (c == '"')
                    line += '"';
                line += c;
            }
            line += '"';
        } else {
            line += f;
        }
    }
    body_ += line + "\r\n";
}

std::string CsvWriter::str() const { return body_; }

void CsvWriter::write(const std::filesystem::path& path) const { write_text_file(path, body_); }

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

void VtkStructuredGrid::write(const std::filesystem::path& path) const {
    const std::size_t nx = xs.size();
    const std::size_t ny = ys.empty() ? 1 : ys.size();
    const std::size_t nz = zs.size();
    const std::size_t npoints = nx * ny * nz;
    const std::size_t ncells =
        (nx > 1 ? nx - 1 : 1) * (ny > 1 ? ny - 1 : 1) * (nz > 1 ? nz - 1 : 1);

    std::string out;
    out += "# vtk DataFile Version 3.0\n";
    out += "platefsi field snapshot\n";
    out += "ASCII\n";
    out += "DATASET STRUCTURED_GRID\n";
    out += "DIMENSIONS " + std::to_string(nx) + " " + std::to_string(ny) + " " +
           std::to_string(nz) + "\n";
    out += "POINTS " + std::to_string(npoints) + " double\n";
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i)
                out += format_float(xs[i]) + " " + format_float(ys.empty() ? 0.0 : ys[j]) + " " +
                       format_float(zs[k]) + "\n";

    if (!point_fields.empty()) {
        out += "POINT_DATA " + std::to_string(npoints) + "\n";
        for (const auto& f : point_fields) {
            if (f.values.size() != npoints * static_cast<std::size_t>(f.components))
                throw IoError("VtkStructuredGrid: field '" + f.name + "' has wrong size");
            if (f.components == 1) {
                out += "SCALARS " + f.name + " double 1\nLOOKUP_TABLE default\n";
                for (double v : f.values)
                    out += format_float(v) + "\n";
            } else {
                out += "VECTORS " + f.name + " double\n";
                for (std::size_t p = 0; p < npoints; ++p) {
                    double v[3] = {0.0, 0.0, 0.0};
                    for (int c = 0; c < f.components && c < 3; ++c)
                        v[c] = f.values[p * static_cast<std::size_t>(f.components) +
                                        static_cast<std::size_t>(c)];
                    out += format_float(v[0]) + " " + format_float(v[1]) + " " +
                           format_float(v[2]) + "\n";
                }
            }
        }
    }
    if (!cell_fields.empty()) {
        out += "CELL_DATA " + std::to_string(ncells) + "\n";
        for (const auto& f : cell_fields) {
            if (f.values.size() != ncells)
                throw IoError("VtkStructuredGrid: cell field '" + f.name + "' has wrong size");
            out += "SCALARS " + f.name + " double 1\nLOOKUP_TABLE default\n";
            for (double v : f.values)
                out += format_float(v) + "\n";
        }
    }
    write_text_file(path, out);
}

namespace {
constexpr char kStatesMagic[4] = {'P', 'F', 'S', 'T'};
}

void RunStates::write(const std::filesystem::path& path) const {
    if (times.size() != states.size())
        throw IoError("RunStates: times/states size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write states file: " + path.string());
    out.write(kStatesMagic, 4);
    const std::int32_t version = 1;
    const std::int32_t count = static_cast<std::int32_t>(times.size());
    const std::int32_t dim = count > 0 ? static_cast<std::int32_t>(states.front().size()) : 0;
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    for (std::int32_t i = 0; i < count; ++i) {
        if (states[static_cast<std::size_t>(i)].size() != dim)
            throw IoError("RunStates: inconsistent state dimensions");
        out.write(reinterpret_cast<const char*>(&times[static_cast<std::size_t>(i)]), 8);
        out.write(reinterpret_cast<const char*>(states[static_cast<std::size_t>(i)].data()),
                  static_cast<std::streamsize>(dim) * 8);
    }
    if (!out)
        throw IoError("write failed: " + path.string());
}

RunStates RunStates::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read states file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kStatesMagic, 4) != 0)
        throw ParseError("not a states file: " + path.string());
    std::int32_t version = 0, count = 0, dim = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&count), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    if (version != 1)
        throw ParseError("unsupported states version: " + path.string());
    RunStates rs;
    rs.times.resize(static_cast<std::size_t>(count));
    rs.states.resize(static_cast<std::size_t>(count));
    for (std::int32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(&rs.times[static_cast<std::size_t>(i)]), 8);
        rs.states[static_cast<std::size_t>(i)].resize(dim);
        in.read(reinterpret_cast<char*>(rs.states[static_cast<std::size_t>(i)].data()),
                static_cast<std::streamsize>(dim) * 8);
    }
    if (!in)
        throw ParseError("truncated states file: " + path.string());
    return rs;
}

void RunManifest::record_output(const std::filesystem::path& path) {
    outputs.emplace_back(path.string(), hash_file(path));
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["inputs"] = inputs;
    j["output_dir"] = output_dir;
    j["config_hash"] = config_hash;
    j["version"] = version;
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : timings_s)
        t[k] = v;
    j["timings_s"] = t;
    nlohmann::json o = nlohmann::json::array();
    for (const auto& [p, h] : outputs) {
        nlohmann::json e;
        e["path"] = p;
        e["hash"] = h;
        o.push_back(e);
    }
    j["outputs"] = o;
    return j;
}

void RunManifest::write(const std::filesystem::path& dir) const {
    write_json_file(dir / "manifest.json", to_json());
}

} // namespace platefsi
