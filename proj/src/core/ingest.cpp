#include "enslens/core/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "enslens/error.hpp"

namespace enslens {
namespace fs = std::filesystem;

namespace {

struct CsvRow {
    std::size_t x, y, z;
    std::vector<float> values;
};

struct CsvTable {
    std::vector<std::string> params;
    std::vector<CsvRow> rows;
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    return out;
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::SchemaViolation, path.string() + ": empty file");
    auto header = split(line);
    if (header.size() < 4 || header[0] != "x" || header[1] != "y" || header[2] != "z")
        throw Error(ErrorCode::SchemaViolation, path.string() + ": header must be x,y,z,<params...>");
    CsvTable table;
    table.params.assign(header.begin() + 3, header.end());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split(line);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) throw Error(ErrorCode::SchemaViolation, where + ": wrong column count");
        CsvRow row;
        std::size_t* coords[3] = {&row.x, &row.y, &row.z};
        for (int k = 0; k < 3; ++k) {
            long long v = -1;
            auto [ptr, ec] = std::from_chars(cells[k].data(), cells[k].data() + cells[k].size(), v);
            if (ec != std::errc() || ptr != cells[k].data() + cells[k].size() || v < 0)
                throw Error(ErrorCode::SchemaViolation, where + ": grid index must be a non-negative integer");
            *coords[k] = static_cast<std::size_t>(v);
        }
        for (std::size_t c = 3; c < cells.size(); ++c) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cells[c], &used);
                if (used != cells[c].size() || !std::isfinite(v)) throw std::invalid_argument("bad");
                row.values.push_back(static_cast<float>(v));
            } catch (const std::exception&) {
                throw Error(ErrorCode::SchemaViolation, where + ": bad value '" + cells[c] + "'");
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace

EnsembleManifest ingest_csv(const std::vector<fs::path>& csv_files, const fs::path& out_dir,
                            const CsvIngestOptions& options) {
    if (csv_files.empty()) throw Error(ErrorCode::SchemaViolation, "no CSV files given");
    std::vector<CsvTable> tables;
    for (const auto& f : csv_files) tables.push_back(read_csv(f));
    for (const auto& t : tables)
        if (t.params != tables.front().params)
            throw Error(ErrorCode::SchemaViolation, "all CSV files need the same parameter columns");

    GridDims dims{0, 0, 0};
    if (options.dims) {
        dims = *options.dims;
    } else {
        for (const auto& t : tables)
            for (const auto& r : t.rows) {
                dims.nx = std::max(dims.nx, r.x + 1);
                dims.ny = std::max(dims.ny, r.y + 1);
                dims.nz = std::max(dims.nz, r.z + 1);
            }
    }
    if (dims.size() == 0) throw Error(ErrorCode::SchemaViolation, "CSV files contain no grid points");

    EnsembleManifest m;
    m.dims = dims;
    m.spacing = options.spacing;
    for (std::size_t p = 0; p < tables.front().params.size(); ++p)
        m.parameters.push_back({p, tables.front().params[p], "", 0.0, 0.0});

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, out_dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < tables.size(); ++i) {
        MemberField field;
        field.member_id = csv_files[i].stem().string();
        field.dims = dims;
        field.param_count = m.param_count();
        field.values.assign(dims.size() * field.param_count, 0.0f);
        for (const auto& r : tables[i].rows) {
            if (r.x >= dims.nx || r.y >= dims.ny || r.z >= dims.nz)
                throw Error(ErrorCode::IndexOutOfRange, csv_files[i].string() + ": grid index outside dims");
            const std::size_t flat = dims.flat(r.x, r.y, r.z);
            for (std::size_t p = 0; p < field.param_count; ++p) field.values[p * dims.size() + flat] = r.values[p];
        }
        const fs::path file = out_dir / ("member_" + field.member_id + ".bin");
        write_member(field, file);
        m.members.push_back({field.member_id, file});
    }
    m.representative_id = options.representative.value_or(m.members.front().id);
    m.member_index(m.representative_id);
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

}  // namespace enslens
