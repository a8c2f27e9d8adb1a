#include "enslens/core/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "enslens/error.hpp"
#include "enslens/util/parallel.hpp"

namespace enslens {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
}

template <class T>
T require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key))
        throw Error(ErrorCode::SchemaViolation, where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::SchemaViolation, where + ": field '" + key + "' has the wrong type");
    }
}

std::uintmax_t expected_bytes(const EnsembleManifest& m) {
    return static_cast<std::uintmax_t>(m.dims.size()) * m.param_count() * sizeof(float);
}

}  // namespace

std::size_t EnsembleManifest::member_index(std::string_view id) const {
    for (std::size_t i = 0; i < members.size(); ++i)
        if (members[i].id == id) return i;
    throw Error(ErrorCode::UnknownMember, std::string(id));
}

std::optional<std::size_t> ActivePoints::position_of(std::uint32_t flat_index) const {
    auto it = std::lower_bound(indices.begin(), indices.end(), flat_index);
    if (it == indices.end() || *it != flat_index) return std::nullopt;
    return static_cast<std::size_t>(it - indices.begin());
}

EnsembleManifest load_manifest(const fs::path& path) {
    const json doc = read_json(path);
    const std::string where = path.string();
    EnsembleManifest m;

    const auto dims = require<std::vector<std::int64_t>>(doc, "grid_dims", where);
    const auto spacing = require<std::vector<double>>(doc, "grid_spacing", where);
    if (dims.size() != 3 || spacing.size() != 3)
        throw Error(ErrorCode::SchemaViolation, where + ": grid_dims and grid_spacing need 3 entries");
    for (auto d : dims)
        if (d <= 0) throw Error(ErrorCode::SchemaViolation, where + ": grid_dims must be positive");
    for (auto s : spacing)
        if (!(s > 0.0)) throw Error(ErrorCode::SchemaViolation, where + ": grid_spacing must be positive");
    m.dims = {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
              static_cast<std::size_t>(dims[2])};
    m.spacing = {spacing[0], spacing[1], spacing[2]};

    const auto params = require<json>(doc, "parameters", where);
    if (!params.is_array() || params.empty())
        throw Error(ErrorCode::SchemaViolation, where + ": parameters must be a non-empty array");
    std::set<std::string> names;
    for (std::size_t p = 0; p < params.size(); ++p) {
        ParameterMeta meta;
        meta.index = p;
        meta.name = require<std::string>(params[p], "name", where);
        meta.units = params[p].is_object() && params[p].contains("units")
                         ? require<std::string>(params[p], "units", where)
                         : std::string{};
        if (!names.insert(meta.name).second)
            throw Error(ErrorCode::SchemaViolation, where + ": duplicate parameter name " + meta.name);
        m.parameters.push_back(std::move(meta));
    }

    const auto members = require<json>(doc, "members", where);
    if (!members.is_array() || members.empty())
        throw Error(ErrorCode::SchemaViolation, where + ": members must be a non-empty array");
    const fs::path base = path.parent_path();
    std::set<std::string> ids;
    for (const auto& entry : members) {
        MemberInfo info;
        info.id = require<std::string>(entry, "id", where);
        fs::path file = require<std::string>(entry, "file", where);
        info.file = file.is_absolute() ? file : base / file;
        if (!ids.insert(info.id).second)
            throw Error(ErrorCode::SchemaViolation, where + ": duplicate member id " + info.id);
        m.members.push_back(std::move(info));
    }
    m.representative_id = require<std::string>(doc, "representative", where);
    if (!ids.count(m.representative_id))
        throw Error(ErrorCode::SchemaViolation, where + ": representative is not a listed member");

    for (const auto& info : m.members) {
        std::error_code ec;
        if (!fs::is_regular_file(info.file, ec)) throw Error(ErrorCode::MissingFile, info.file.string());
        const auto bytes = fs::file_size(info.file, ec);
        if (ec || bytes != expected_bytes(m))
            throw Error(ErrorCode::InconsistentDims,
                        info.file.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                            std::to_string(expected_bytes(m)));
    }
    return m;
}

void save_manifest(const EnsembleManifest& m, const fs::path& path) {
    json doc;
    doc["grid_dims"] = {m.dims.nx, m.dims.ny, m.dims.nz};
    doc["grid_spacing"] = {m.spacing.dx, m.spacing.dy, m.spacing.dz};
    json params = json::array();
    for (const auto& p : m.parameters) params.push_back({{"name", p.name}, {"units", p.units}});
    doc["parameters"] = params;
    json members = json::array();
    const fs::path base = path.parent_path();
    for (const auto& info : m.members) {
        fs::path rel = info.file.lexically_relative(base.empty() ? fs::path(".") : base);
        if (rel.empty() || *rel.begin() == "..") rel = info.file;
        members.push_back({{"id", info.id}, {"file", rel.generic_string()}});
    }
    doc["members"] = members;
    doc["representative"] = m.representative_id;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, path.string());
}

MemberField load_member(const EnsembleManifest& manifest, std::size_t member) {
    const auto& info = manifest.members.at(member);
    std::ifstream in(info.file, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, info.file.string());
    MemberField field;
    field.member_id = info.id;
    field.dims = manifest.dims;
    field.param_count = manifest.param_count();
    const std::size_t count = manifest.dims.size() * manifest.param_count();
    std::vector<unsigned char> bytes(count * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size() || in.peek() != std::char_traits<char>::eof())
        throw Error(ErrorCode::InconsistentDims, info.file.string());
    field.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = std::uint32_t(bytes[4 * i]) | std::uint32_t(bytes[4 * i + 1]) << 8 |
                                   std::uint32_t(bytes[4 * i + 2]) << 16 | std::uint32_t(bytes[4 * i + 3]) << 24;
        float v;
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v))
            throw Error(ErrorCode::SchemaViolation, info.file.string() + ": non-finite value at " + std::to_string(i));
        field.values[i] = v;
    }
    return field;
}

void write_member(const MemberField& field, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, path.string());
    std::vector<unsigned char> bytes(field.values.size() * 4);
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &field.values[i], sizeof bits);
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, path.string());
}

namespace {

void reset_bounds(EnsembleManifest& manifest) {
    for (auto& p : manifest.parameters) {
        p.global_min = std::numeric_limits<double>::infinity();
        p.global_max = -std::numeric_limits<double>::infinity();
    }
}

void accumulate_bounds(EnsembleManifest& manifest, const MemberField& field) {
    if (field.param_count != manifest.param_count() || field.dims != manifest.dims)
        throw Error(ErrorCode::InconsistentDims, field.member_id);
    for (std::size_t p = 0; p < field.param_count; ++p) {
        const auto values = field.parameter(p);
        if (values.empty()) continue;
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        auto& meta = manifest.parameters[p];
        meta.global_min = std::min(meta.global_min, static_cast<double>(*lo));
        meta.global_max = std::max(meta.global_max, static_cast<double>(*hi));
    }
}

}  // namespace

void normalize_ensemble(EnsembleManifest& manifest, std::span<const MemberField> fields) {
    reset_bounds(manifest);
    for (const auto& f : fields) accumulate_bounds(manifest, f);
}

void normalize_ensemble(EnsembleManifest& manifest) {
    reset_bounds(manifest);
    for (std::size_t m = 0; m < manifest.member_count(); ++m) accumulate_bounds(manifest, load_member(manifest, m));
}

ActivePoints active_points(const MemberField& member, std::span<const ParameterMeta> meta) {
    if (meta.size() != member.param_count)
        throw Error(ErrorCode::DimensionMismatch, "parameter metadata does not match member " + member.member_id);
    const std::size_t n = member.dims.size();
    const std::size_t d = member.param_count;

    struct Chunk {
        std::vector<std::uint32_t> indices;
        std::vector<float> coords;
    };
    constexpr std::size_t kChunk = 1 << 14;
    std::vector<Chunk> chunks((n + kChunk - 1) / kChunk);
    parallel_each(chunks.size(), [&](std::size_t c) {
        Chunk& out = chunks[c];
        std::vector<float> row(d);
        for (std::size_t i = c * kChunk, end = std::min(n, (c + 1) * kChunk); i < end; ++i) {
            double norm_sq = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                row[p] = static_cast<float>(meta[p].normalize(member.value(p, i)));
                norm_sq += double(row[p]) * double(row[p]);
            }
            if (std::sqrt(norm_sq) >= kActiveNormThreshold) {
                out.indices.push_back(static_cast<std::uint32_t>(i));
                out.coords.insert(out.coords.end(), row.begin(), row.end());
            }
        }
    });

    ActivePoints points;
    points.member_id = member.member_id;
    points.dims = d;
    std::size_t total = 0;
    for (const auto& c : chunks) total += c.indices.size();
    points.indices.reserve(total);
    points.coords.reserve(total * d);
    for (const auto& c : chunks) {
        points.indices.insert(points.indices.end(), c.indices.begin(), c.indices.end());
        points.coords.insert(points.coords.end(), c.coords.begin(), c.coords.end());
    }
    return points;
}

namespace {

ClusterSelection parse_cluster(const json& obj, const std::string& where, const EnsembleManifest& manifest,
                               std::span<const ActivePoints> members) {
    ClusterSelection c;
    c.member_id = require<std::string>(obj, "member", where);
    c.label = require<std::string>(obj, "label", where);
    const auto raw = require<std::vector<std::int64_t>>(obj, "indices", where);
    if (raw.empty()) throw Error(ErrorCode::SchemaViolation, where + ": cluster " + c.label + " is empty");

    const ActivePoints* points = nullptr;
    for (const auto& m : members)
        if (m.member_id == c.member_id) points = &m;
    if (!points) throw Error(ErrorCode::UnknownMember, c.member_id);

    c.point_indices.reserve(raw.size());
    for (auto idx : raw) {
        if (idx < 0 || static_cast<std::uint64_t>(idx) >= manifest.dims.size())
            throw Error(ErrorCode::IndexOutOfRange, c.label + ": index " + std::to_string(idx));
        const auto flat = static_cast<std::uint32_t>(idx);
        if (!points->position_of(flat))
            throw Error(ErrorCode::NotActivePoint, c.label + ": index " + std::to_string(idx));
        c.point_indices.push_back(flat);
    }
    std::sort(c.point_indices.begin(), c.point_indices.end());
    c.point_indices.erase(std::unique(c.point_indices.begin(), c.point_indices.end()), c.point_indices.end());
    return c;
}

}  // namespace

std::vector<ClusterSelection> import_clusters(const fs::path& path, const EnsembleManifest& manifest,
                                              std::span<const ActivePoints> members) {
    const json doc = read_json(path);
    const std::string where = path.string();
    std::vector<ClusterSelection> out;
    if (doc.is_array()) {
        for (const auto& obj : doc) out.push_back(parse_cluster(obj, where, manifest, members));
    } else {
        out.push_back(parse_cluster(doc, where, manifest, members));
    }
    return out;
}

void export_clusters(std::span<const ClusterSelection> clusters, const fs::path& path) {
    json doc = json::array();
    for (const auto& c : clusters)
        doc.push_back({{"member", c.member_id}, {"label", c.label}, {"indices", c.point_indices}});
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, path.string());
    out << doc.dump() << '\n';
    if (!out) throw Error(ErrorCode::IoError, path.string());
}

std::vector<std::size_t> cluster_rows(const ActivePoints& points, const ClusterSelection& cluster) {
    if (cluster.member_id != points.member_id)
        throw Error(ErrorCode::UnknownMember, cluster.member_id + " is not " + points.member_id);
    std::vector<std::size_t> rows;
    rows.reserve(cluster.point_indices.size());
    for (auto idx : cluster.point_indices) {
        auto pos = points.position_of(idx);
        if (!pos) throw Error(ErrorCode::NotActivePoint, cluster.label + ": index " + std::to_string(idx));
        rows.push_back(*pos);
    }
    return rows;
}

Ensemble load_ensemble(const fs::path& manifest_path) {
    Ensemble e;
    e.manifest = load_manifest(manifest_path);
    std::vector<MemberField> fields(e.manifest.member_count());
    for (std::size_t m = 0; m < fields.size(); ++m) fields[m] = load_member(e.manifest, m);
    normalize_ensemble(e.manifest, fields);
    e.active.resize(fields.size());
    for (std::size_t m = 0; m < fields.size(); ++m) e.active[m] = active_points(fields[m], e.manifest.parameters);
    return e;
}

}  // namespace enslens
