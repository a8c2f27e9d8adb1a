#include "enslens/spatial/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "enslens/error.hpp"
#include "enslens/util/parallel.hpp"

namespace enslens {
namespace {

constexpr int kTriTable[256][16] = {
#include "mc_tri_table.inc"
};

// Corner offsets and edge endpoints in the table's corner numbering.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

bool in_grid(const GridDims& d, std::int64_t x, std::int64_t y, std::int64_t z) {
    return x >= 0 && y >= 0 && z >= 0 && x < std::int64_t(d.nx) && y < std::int64_t(d.ny) && z < std::int64_t(d.nz);
}

double padded(const BinaryField& f, std::int64_t x, std::int64_t y, std::int64_t z) {
    if (!in_grid(f.dims, x, y, z)) return 0.0;
    return f.values[f.dims.flat(std::size_t(x), std::size_t(y), std::size_t(z))];
}

}  // namespace

BinaryField binary_field(const GridDims& dims, const GridSpacing& spacing, const ActivePoints& points,
                         const SelectionMask& mask) {
    if (mask.size() != points.size() || mask.member_id() != points.member_id)
        throw Error(ErrorCode::MismatchedInputs, "mask does not belong to these active points");
    BinaryField f{points.member_id, dims, spacing, std::vector<double>(dims.size(), 0.0)};
    for (auto row : mask.set_rows()) {
        const auto flat = points.indices[row];
        if (flat >= dims.size()) throw Error(ErrorCode::IndexOutOfRange, "active index outside the grid");
        f.values[flat] = 1.0;
    }
    return f;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::ConfigInvalid, "sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + radius)];
    }
    for (auto& w : k) w /= sum;
    return k;
}

BinaryField smooth_binary(const BinaryField& field, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    const auto radius = static_cast<std::int64_t>(kernel.size() / 2);
    const GridDims& d = field.dims;
    const std::size_t n[3] = {d.nx, d.ny, d.nz};
    const std::size_t stride[3] = {1, d.nx, d.nx * d.ny};

    std::vector<double> cur = field.values, next(cur.size());
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t len = n[axis];
        const std::size_t s = stride[axis];
        const int ua = axis == 0 ? 1 : 0, va = axis == 2 ? 1 : 2;
        const std::size_t lines = n[ua] * n[va];
        parallel_for(lines, 1, [&](std::size_t begin, std::size_t end) {
            for (std::size_t line = begin; line < end; ++line) {
                const std::size_t base = (line % n[ua]) * stride[ua] + (line / n[ua]) * stride[va];
                for (std::size_t i = 0; i < len; ++i) {
                    double acc = 0.0;
                    const std::int64_t lo = std::max<std::int64_t>(-radius, -std::int64_t(i));
                    const std::int64_t hi = std::min<std::int64_t>(radius, std::int64_t(len) - 1 - std::int64_t(i));
                    for (std::int64_t k = lo; k <= hi; ++k)
                        acc += kernel[static_cast<std::size_t>(k + radius)] * cur[base + std::size_t(std::int64_t(i) + k) * s];
                    next[base + i * s] = acc;
                }
            }
        });
        std::swap(cur, next);
    }
    BinaryField out{field.member_id, field.dims, field.spacing, std::move(cur)};
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::max(out.values[i], field.values[i]);
    return out;
}

SurfaceMesh extract_surface(const BinaryField& field, double iso) {
    if (!(iso > 0.0 && iso < 1.0)) throw Error(ErrorCode::ConfigInvalid, "iso must lie in (0, 1)");
    const GridDims& d = field.dims;
    const std::int64_t nx = std::int64_t(d.nx), ny = std::int64_t(d.ny), nz = std::int64_t(d.nz);
    // Edge key over the padded lattice: lower endpoint and axis.
    auto edge_key = [&](std::int64_t x, std::int64_t y, std::int64_t z, int axis) {
        return static_cast<std::uint64_t>((((z + 1) * (ny + 2) + (y + 1)) * (nx + 2) + (x + 1)) * 3 + axis);
    };

    struct Slab {
        std::vector<std::array<std::uint64_t, 3>> triangles;
    };
    // Cell (x,y,z) spans corners x..x+1 etc.; cells run from -1 to n-1 to close the surface at the border.
    const std::size_t slab_count = static_cast<std::size_t>(nz + 1);
    std::vector<Slab> slabs(slab_count);
    parallel_each(slab_count, [&](std::size_t s) {
        const std::int64_t z = std::int64_t(s) - 1;
        auto& out = slabs[s].triangles;
        double v[8];
        for (std::int64_t y = -1; y < ny; ++y) {
            for (std::int64_t x = -1; x < nx; ++x) {
                int mask = 0;
                for (int c = 0; c < 8; ++c) {
                    v[c] = padded(field, x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]);
                    if (!(v[c] > iso)) mask |= 1 << c;
                }
                if (mask == 0 || mask == 255) continue;
                for (int t = 0; kTriTable[mask][t] != -1; t += 3) {
                    std::array<std::uint64_t, 3> tri;
                    for (int k = 0; k < 3; ++k) {
                        const int e = kTriTable[mask][t + k];
                        const int* a = kCorner[kEdge[e][0]];
                        const int* b = kCorner[kEdge[e][1]];
                        const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
                        tri[static_cast<std::size_t>(k)] =
                            edge_key(x + std::min(a[0], b[0]), y + std::min(a[1], b[1]), z + std::min(a[2], b[2]), axis);
                    }
                    out.push_back(tri);
                }
            }
        }
    });

    SurfaceMesh mesh;
    mesh.member_id = field.member_id;
    mesh.dims = d;
    mesh.spacing = field.spacing;
    mesh.iso = iso;
    std::unordered_map<std::uint64_t, std::uint32_t> vertex_of;
    auto vertex = [&](std::uint64_t key) -> std::uint32_t {
        auto [it, fresh] = vertex_of.try_emplace(key, static_cast<std::uint32_t>(mesh.positions.size()));
        if (!fresh) return it->second;
        const int axis = static_cast<int>(key % 3);
        std::uint64_t rest = key / 3;
        const std::int64_t x = std::int64_t(rest % std::uint64_t(nx + 2)) - 1;
        rest /= std::uint64_t(nx + 2);
        const std::int64_t y = std::int64_t(rest % std::uint64_t(ny + 2)) - 1;
        const std::int64_t z = std::int64_t(rest / std::uint64_t(ny + 2)) - 1;
        GridPoint p0{x, y, z}, p1{x + (axis == 0), y + (axis == 1), z + (axis == 2)};
        const double v0 = padded(field, p0.x, p0.y, p0.z);
        const double v1 = padded(field, p1.x, p1.y, p1.z);
        const double t = (iso - v0) / (v1 - v0);
        const double pos[3] = {double(x) + (axis == 0 ? t : 0.0), double(y) + (axis == 1 ? t : 0.0),
                               double(z) + (axis == 2 ? t : 0.0)};
        mesh.positions.push_back({pos[0] * field.spacing.dx, pos[1] * field.spacing.dy,
                                  pos[2] * field.spacing.dz});
        mesh.vertex_edges.push_back(v0 > iso ? std::array<GridPoint, 2>{p0, p1} : std::array<GridPoint, 2>{p1, p0});
        return it->second;
    };

    for (const auto& slab : slabs) {
        for (const auto& tri : slab.triangles) {
            const std::array<std::uint32_t, 3> t{vertex(tri[0]), vertex(tri[1]), vertex(tri[2])};
            if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
            const auto& a = mesh.positions[t[0]];
            const auto& b = mesh.positions[t[1]];
            const auto& c = mesh.positions[t[2]];
            const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
            const double w[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
            const double cx = u[1] * w[2] - u[2] * w[1], cy = u[2] * w[0] - u[0] * w[2], cz = u[0] * w[1] - u[1] * w[0];
            if (cx == 0.0 && cy == 0.0 && cz == 0.0) continue;
            mesh.triangles.push_back(t);
        }
    }
    return mesh;
}

std::vector<int> classify_boundary(const SurfaceMesh& mesh, const BinaryField& selection, const MemberField& member,
                                   std::span<const ParameterMeta> meta, const MultiParameterBrush& brush) {
    if (mesh.dims != selection.dims || mesh.dims != member.dims || mesh.member_id != selection.member_id ||
        mesh.member_id != member.member_id)
        throw Error(ErrorCode::MismatchedInputs, "mesh, selection and member field disagree");
    if (meta.size() != member.param_count || brush.dims() != member.param_count)
        throw Error(ErrorCode::MismatchedInputs, "brush and member disagree in parameter count");
    const std::size_t dcount = member.param_count;
    const GridDims& g = mesh.dims;

    auto normalized = [&](const GridPoint& p, std::vector<float>& out) {
        const std::size_t flat = g.flat(std::size_t(p.x), std::size_t(p.y), std::size_t(p.z));
        for (std::size_t k = 0; k < dcount; ++k) out[k] = static_cast<float>(meta[k].normalize(member.value(k, flat)));
    };
    auto selected = [&](const GridPoint& p) {
        return in_grid(g, p.x, p.y, p.z) &&
               selection.values[g.flat(std::size_t(p.x), std::size_t(p.y), std::size_t(p.z))] >= 1.0;
    };

    std::vector<int> out(mesh.vertex_count(), kNoBoundingParameter);
    std::vector<float> fi(dcount), fo(dcount);
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        const auto& [in, outp] = mesh.vertex_edges[v];
        if (selected(outp)) throw Error(ErrorCode::MismatchedInputs, "outside edge endpoint is selected");
        if (!selected(in)) continue;  // smoothing halo
        if (!in_grid(g, outp.x, outp.y, outp.z)) continue;  // domain border
        normalized(in, fi);
        normalized(outp, fo);

        const RefinedBox* owner = nullptr;
        for (const auto& rb : brush.boxes) {
            if (!rb.box.contains(fi)) continue;
            if (brush.mode == BrushMode::BoxesAndEllipsoids && rb.ellipsoid && !ellipsoid_contains(*rb.ellipsoid, fi))
                continue;
            owner = &rb;
            break;
        }
        if (!owner) throw Error(ErrorCode::MismatchedInputs, "selected grid point is not selected by the brush");

        int best = kNoBoundingParameter;
        double best_t = 2.0;
        for (std::size_t k = 0; k < dcount; ++k) {
            const auto& iv = owner->box.intervals[k];
            const double a = fi[k], b = fo[k];
            double bound;
            if (b < iv.lo)
                bound = iv.lo;
            else if (b > iv.hi)
                bound = iv.hi;
            else
                continue;
            const double t = (bound - a) / (b - a);
            if (t < best_t) {
                best_t = t;
                best = static_cast<int>(k);
            }
        }
        if (best == kNoBoundingParameter && brush.mode == BrushMode::BoxesAndEllipsoids && owner->ellipsoid &&
            !ellipsoid_contains(*owner->ellipsoid, fo))
            best = kEllipsoidBound;
        out[v] = best;
    }
    return out;
}

OverlapStats overlap_stats(const BinaryField& a, const BinaryField& b) {
    if (a.dims != b.dims) throw Error(ErrorCode::GridMismatch, "fields live on different grids");
    OverlapStats s;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const bool in_a = a.values[i] >= 1.0, in_b = b.values[i] >= 1.0;
        s.count_a += in_a;
        s.count_b += in_b;
        s.intersection += in_a && in_b;
    }
    const std::size_t uni = s.count_a + s.count_b - s.intersection;
    s.jaccard = uni == 0 ? 1.0 : double(s.intersection) / double(uni);
    return s;
}

ComparisonPayload comparison_payload(SurfaceMesh mesh_a, const BinaryField& field_a, SurfaceMesh mesh_b,
                                     const BinaryField& field_b) {
    if (mesh_a.dims != mesh_b.dims) throw Error(ErrorCode::GridMismatch, "meshes live on different grids");
    ComparisonPayload p;
    p.overlap = overlap_stats(field_a, field_b);
    p.a = std::move(mesh_a);
    p.b = std::move(mesh_b);
    return p;
}

std::string obj_string(const SurfaceMesh& mesh) {
    std::string out;
    char buf[160];
    out += "# enslens surface mesh\n";
    out += "# member " + mesh.member_id + "\n";
    std::snprintf(buf, sizeof buf, "# grid %zu %zu %zu iso %.6f\n", mesh.dims.nx, mesh.dims.ny, mesh.dims.nz, mesh.iso);
    out += buf;
    std::snprintf(buf, sizeof buf, "# vertices %zu triangles %zu\n", mesh.positions.size(), mesh.triangles.size());
    out += buf;
    for (std::size_t i = 0; i < mesh.positions.size(); ++i) {
        const auto& p = mesh.positions[i];
        std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", p[0], p[1], p[2]);
        out += buf;
    }
    if (!mesh.vertex_param.empty()) {
        out += "# per-vertex bounding parameter, one #vp line per v line (-1 none, -2 ellipsoid)\n";
        for (int param : mesh.vertex_param) {
            std::snprintf(buf, sizeof buf, "#vp %d\n", param);
            out += buf;
        }
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(buf, sizeof buf, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out += buf;
    }
    return out;
}

void export_obj(const SurfaceMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, path.string());
    const std::string text = obj_string(mesh);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorCode::IoError, path.string());
}

nlohmann::json to_json(const SurfaceMesh& mesh) {
    std::vector<float> positions;
    positions.reserve(mesh.positions.size() * 3);
    for (const auto& p : mesh.positions)
        for (double c : p) positions.push_back(static_cast<float>(c));
    std::vector<std::uint32_t> indices;
    indices.reserve(mesh.triangles.size() * 3);
    for (const auto& t : mesh.triangles) indices.insert(indices.end(), t.begin(), t.end());
    return {{"member", mesh.member_id},
            {"iso", mesh.iso},
            {"vertex_count", mesh.positions.size()},
            {"triangle_count", mesh.triangles.size()},
            {"positions", positions},
            {"indices", indices},
            {"vertex_param", mesh.vertex_param}};
}

nlohmann::json to_json(const OverlapStats& s) {
    return {{"intersection", s.intersection}, {"count_a", s.count_a}, {"count_b", s.count_b}, {"jaccard", s.jaccard}};
}

}  // namespace enslens
