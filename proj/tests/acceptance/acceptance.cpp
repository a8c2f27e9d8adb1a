// Acceptance criteria 1-8, one PASS/FAIL line each. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "enslens/brush/brush.hpp"
#include "enslens/core/synth.hpp"
#include "enslens/pipeline/pipeline.hpp"
#include "enslens/refine/refine.hpp"
#include "enslens/spatial/surface.hpp"
#include "enslens/util/parallel.hpp"
#include "enslens/violin/violin.hpp"

using namespace enslens;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;
};

void fail(Outcome& o, const std::string& why) {
    if (o.pass) o.detail = why;
    o.pass = false;
}

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

// ---- 1 ----

Outcome sah_oracle_equivalence() {
    Outcome o;
    std::mt19937_64 rng(2024);
    const auto t0 = Clock::now();
    int sets = 0;
    while (sets < 200) {
        const std::size_t n = 2 + rng() % 63;
        std::vector<double> xs(n);
        for (auto& x : xs) x = double(rng() % (sets % 2 ? 16 : 4096)) / 4096.0;
        const double mn = *std::min_element(xs.begin(), xs.end()), mx = *std::max_element(xs.begin(), xs.end());
        if (mn == mx) continue;
        const double lo = mn - double(rng() % 4) / 64.0, hi = mx + double(rng() % 4) / 64.0;
        ++sets;
        // exhaustive: every distinct coordinate, both assignments of the points at it
        double best = INFINITY, best_v = 0;
        for (double v : std::set<double>(xs.begin(), xs.end()))
            for (int left = 0; left < 2; ++left) {
                double nl = 0, nr = 0;
                for (double x : xs) (x < v || (x == v && left) ? nl : nr) += 1;
                const double c = nl * (v - lo) / (hi - lo) + nr * (hi - v) / (hi - lo);
                if (c < best) best = c, best_v = v;
            }
        const auto s = sah_best_split(xs, {lo, hi}, 0);
        if (s.cost != best || s.value != best_v) fail(o, fmt("set %d: got (%g, %g), want (%g, %g)", sets, s.value, s.cost, best_v, best));
    }
    const double t = seconds_since(t0);
    if (t >= 1.0) fail(o, fmt("took %.3f s", t));
    if (o.pass) o.detail = fmt("200 sets exact, %.3f s", t);
    return o;
}

// ---- 2 ----

ActivePoints cluster_plus_background(std::mt19937_64& rng, std::size_t d, std::size_t n_cluster, std::size_t n_bg,
                                     std::vector<std::size_t>& cluster) {
    std::normal_distribution<double> g(0, 1);
    std::uniform_real_distribution<double> u(0, 1);
    ActivePoints pts;
    pts.member_id = "m";
    pts.dims = d;
    std::vector<double> center(d), scale(d);
    for (std::size_t p = 0; p < d; ++p) center[p] = 0.3 + 0.4 * u(rng), scale[p] = 0.02 + 0.08 * u(rng);
    const double rho = u(rng);
    cluster.clear();
    for (std::size_t i = 0; i < n_cluster + n_bg; ++i) {
        const bool in = i < n_cluster;
        const double shared = g(rng);
        for (std::size_t p = 0; p < d; ++p) {
            const double v = in ? center[p] + scale[p] * (rho * shared + std::sqrt(1 - rho * rho) * g(rng)) : u(rng);
            pts.coords.push_back(float(std::clamp(v, 0.0, 1.0)));
        }
        pts.indices.push_back(std::uint32_t(i));
        if (in) cluster.push_back(i);
    }
    return pts;
}

Outcome refinement_chain() {
    Outcome o;
    std::mt19937_64 rng(77);
    std::size_t total_points = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = 2 + rng() % 7;
        const std::size_t n = 50 + rng() % 4951;
        std::vector<std::size_t> rows;
        const auto pts = cluster_plus_background(rng, d, n, 1 + rng() % 3000, rows);
        const auto box = brush_from_rows(pts, rows);
        const auto extreme = apply_box(box, pts);
        const auto kd = apply_refined(refine_brush(box, pts, rows, BrushMode::BoxesOnly), pts);
        const auto el = apply_refined(refine_brush(box, pts, rows, BrushMode::BoxesAndEllipsoids), pts);
        for (auto r : rows)
            if (!kd.test(r)) fail(o, fmt("cluster %d: point %zu lost by kd_refine", t, r));
        if (!el.is_subset_of(kd)) fail(o, fmt("cluster %d: ellipsoid mask not within kd mask", t));
        if (!kd.is_subset_of(extreme)) fail(o, fmt("cluster %d: kd mask not within extreme-value mask", t));
        total_points += n;
    }
    if (o.pass) o.detail = fmt("100 clusters, %zu cluster points conserved", total_points);
    return o;
}

// ---- 3 and 4 ----

struct ReductionData {
    SynthEnsemble synth;
    std::vector<ActivePoints> active;
    MultiParameterBrush ellipsoids;
    std::vector<std::size_t> rows;
};

ReductionData reduction_data() {
    ReductionData r{synth_ensemble(2024, reduction_synth_config()), {}, {}, {}};
    auto& m = r.synth.manifest;
    normalize_ensemble(m, r.synth.fields);
    for (const auto& f : r.synth.fields) r.active.push_back(active_points(f, m.parameters));
    return r;
}

Outcome reduction_behavior(ReductionData& data) {
    Outcome o;
    const auto t0 = Clock::now();
    const auto& rep = data.active[data.synth.manifest.representative_index()];
    const auto& cluster = data.synth.ground_truth.at(0);
    data.rows = cluster_rows(rep, cluster);
    const double n = double(data.rows.size());
    const auto box = brush_from_rows(rep, data.rows);
    const auto extreme = apply_box(box, rep);
    const auto kd_brush = refine_brush(box, rep, data.rows, BrushMode::BoxesOnly, 2);
    const auto kd = apply_refined(kd_brush, rep);
    data.ellipsoids = refine_brush(box, rep, data.rows, BrushMode::BoxesAndEllipsoids, 2);
    const auto el = apply_refined(data.ellipsoids, rep);
    std::size_t kept = 0;
    for (auto r : data.rows) kept += el.test(r);

    // the other members follow the representative's chain too
    for (const auto& pts : data.active) {
        const auto a = apply_box(box, pts), b = apply_refined(kd_brush, pts), c = apply_refined(data.ellipsoids, pts);
        if (!c.is_subset_of(b) || !b.is_subset_of(a)) fail(o, "containment chain broken in member " + pts.member_id);
    }
    const double f_box = double(extreme.count()) / n, f_kd = double(kd.count()) / n, f_el = double(el.count()) / n;
    const double retained = double(kept) / n, t = seconds_since(t0);
    const std::string summary =
        fmt("factors %.2f -> %.2f -> %.2f, retained %.1f%%, %.1f s", f_box, f_kd, f_el, 100 * retained, t);
    if (!(f_box >= 5.0)) fail(o, "extreme-value factor below 5; " + summary);
    if (!(f_kd < f_box)) fail(o, "kd factor did not decrease; " + summary);
    if (!(f_el <= 1.5)) fail(o, "ellipsoid factor above 1.5; " + summary);
    if (!(retained >= 0.6)) fail(o, "fewer than 60% of cluster points kept; " + summary);
    if (t >= 30.0) fail(o, "over 30 s; " + summary);
    if (o.pass) o.detail = summary;
    return o;
}

Outcome ellipsoid_rule(const ReductionData& data) {
    Outcome o;
    const auto& rep = data.active[data.synth.manifest.representative_index()];
    const std::size_t d = rep.dims;
    std::size_t fitted = 0, outside_band = 0, tied = 0, not_minimal = 0;
    for (const auto& rb : data.ellipsoids.boxes) {
        if (!rb.ellipsoid) continue;
        ++fitted;
        const auto& e = *rb.ellipsoid;
        const double n = double(rb.rows.size());
        std::size_t inside = 0, strictly = 0;
        double lo = INFINITY, hi = 0;
        for (auto r : rb.rows) {
            const double d2 = mahalanobis_squared(e, rep.row(r));
            inside += ellipsoid_contains(e, rep.row(r));
            strictly += d2 < e.radius_squared;
            lo = std::min(lo, d2);
            hi = std::max(hi, d2);
        }
        const double frac = double(inside) / n;
        if (frac < 0.68 || frac > 0.68 + 1.0 / n) {
            ++outside_band;
            // n <= D+1 points span at most n-1 dimensions and are all equidistant from their mean
            if (rb.rows.size() <= d + 1 && hi - lo <= 1e-9 * e.radius_squared) ++tied;
        }
        if (double(strictly) / n >= 0.68) ++not_minimal;
    }
    const std::string summary = fmt("%zu ellipsoids, %zu outside [0.68, 0.68+1/n] (%zu with n <= D+1 and all distances tied), %zu not minimal",
                                    fitted, outside_band, tied, not_minimal);
    if (fitted == 0 || outside_band > 0 || not_minimal > 0) fail(o, summary);
    o.detail = summary;
    return o;
}

// ---- 5 ----

Outcome violin_math() {
    Outcome o;
    const Rgb red{1, 0, 0}, blue{0, 0, 1};
    const auto r = blend_stack(std::vector<Rgb>{red});
    if (r.r != 1.0 || std::abs(r.g - 0.6) > 1e-12 || std::abs(r.b - 0.6) > 1e-12) fail(o, "blend(red) != (1, 0.6, 0.6)");
    for (int t = 0; t < 50; ++t) {
        std::mt19937_64 rng(t);
        std::uniform_real_distribution<double> u(0, 1);
        const Rgb a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
        const auto got = blend_stack(std::vector<Rgb>{a, b});
        // closed form: C = a*b + (1-a)*(a*ca + (1-a)*1) with alpha 0.4
        auto want = [](double ca, double cb) { return 0.4 * cb + 0.6 * (0.4 * ca + 0.6); };
        if (std::abs(got.r - want(a.r, b.r)) > 1e-9 || std::abs(got.g - want(a.g, b.g)) > 1e-9 ||
            std::abs(got.b - want(a.b, b.b)) > 1e-9)
            fail(o, "two-color fold differs from closed form");
    }
    (void)blue;

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = 2 + rng() % 11;
        std::vector<DensityCurve> curves(d);
        for (std::size_t p = 0; p < d; ++p) {
            std::vector<double> v(200);
            const double c = u(rng), s = 0.02 + 0.2 * u(rng);
            std::normal_distribution<double> g(c, s);
            for (auto& x : v) x = std::clamp(g(rng), 0.0, 1.0);
            curves[p] = density_curve(p, v, 64);
        }
        const auto order = draw_order(curves);
        for (std::size_t k = 0; k + 1 < d; ++k)
            if (curves[order[k]].area < curves[order[k + 1]].area) fail(o, "draw order areas increase");
        const auto sim = overlap_similarity(curves);
        const auto sides = assign_sides(sim, d);
        std::size_t bi = 0, bj = 1;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j)
                if (sim[i * d + j] > sim[bi * d + bj]) bi = i, bj = j;
        auto on_left = [&](std::size_t p) {
            return std::find(sides.left.begin(), sides.left.end(), p) != sides.left.end();
        };
        if (on_left(bi) == on_left(bj)) fail(o, fmt("matrix %d: most similar pair on one side", t));
    }

    const auto colors = dark2();
    auto hue = [&](std::size_t i) { return hsl_hue(colors[i]); };
    double best = INFINITY;
    int partitions = 0;
    for (unsigned mask = 0; mask < 256; ++mask) {
        if (__builtin_popcount(mask) != 4 || !(mask & 1u)) continue;  // fix color 0 in group A: 35 unordered
        for (int swap = 0; swap < 2; ++swap) {
            ++partitions;
            double spread[2] = {0, 0};
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = i + 1; j < 8; ++j) {
                    const int gi = (mask >> i) & 1, gj = (mask >> j) & 1;
                    if (gi != gj || hue(i) < 0 || hue(j) < 0) continue;
                    const double dd = std::abs(hue(i) - hue(j));
                    spread[gi] = std::max(spread[gi], std::min(dd, 360.0 - dd));
                }
            best = std::min(best, std::max(spread[0], spread[1]));
        }
    }
    const auto split = split_dark2();
    if (partitions != 70) fail(o, "partition enumeration incomplete");
    if (split.objective != best) fail(o, fmt("palette split %.6f vs brute force %.6f", split.objective, best));
    if (o.pass) o.detail = fmt("palette objective %.3f deg over 70 partitions", best);
    return o;
}

// ---- 6 ----

struct MeshTopology {
    bool watertight = true;
    long euler = 0;
};

MeshTopology topology(const SurfaceMesh& m) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
    for (const auto& t : m.triangles)
        for (int k = 0; k < 3; ++k) ++edges[{std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])}];
    MeshTopology top;
    for (const auto& [e, c] : edges) top.watertight &= c == 2;
    top.euler = long(m.vertex_count()) - long(edges.size()) + long(m.triangles.size());
    return top;
}

BinaryField field_of(GridDims d, const std::function<bool(std::size_t, std::size_t, std::size_t)>& pred) {
    BinaryField f;
    f.member_id = "m";
    f.dims = d;
    f.values.assign(d.size(), 0.0);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) f.values[d.flat(x, y, z)] = pred(x, y, z) ? 1.0 : 0.0;
    return f;
}

Outcome surface_properties() {
    Outcome o;
    const auto voxel = field_of({5, 5, 5}, [](auto x, auto y, auto z) { return x == 2 && y == 2 && z == 2; });
    const auto ball = field_of({32, 32, 32}, [](auto x, auto y, auto z) {
        const double dx = double(x) - 15.5, dy = double(y) - 15.5, dz = double(z) - 15.5;
        return dx * dx + dy * dy + dz * dz <= 100.0;
    });
    for (const auto* f : {&voxel, &ball}) {
        const auto top = topology(extract_surface(*f));
        if (!top.watertight || top.euler != 2) fail(o, fmt("mesh not closed: chi = %ld", top.euler));
        const auto s = smooth_binary(*f, 1.0);
        for (std::size_t i = 0; i < s.values.size(); ++i)
            if (f->values[i] == 1.0 && !(s.values[i] > 0.1)) fail(o, "selected grid point at or below iso");
        const auto smoothed = topology(extract_surface(s));
        if (!smoothed.watertight) fail(o, "smoothed mesh not watertight");
    }

    // monotone ramp: p0 = x, p1 = y; brush constrains p0 to [0, 0.5] only
    const std::size_t n = 12;
    MemberField mf;
    mf.member_id = "m";
    mf.dims = {n, n, n};
    mf.param_count = 2;
    mf.values.resize(2 * mf.dims.size());
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                mf.values[mf.dims.flat(x, y, z)] = float(double(x) / double(n - 1));
                mf.values[mf.dims.size() + mf.dims.flat(x, y, z)] = float(double(y) / double(n - 1));
            }
    const std::vector<ParameterMeta> meta{{0, "x", "", 0.0, 1.0}, {1, "y", "", 0.0, 1.0}};
    const auto pts = active_points(mf, meta);
    const HyperBox box{{{0.0, 0.5}, {0.0, 1.0}}};
    const auto mask = apply_box(box, pts);
    const auto sel = binary_field(mf.dims, {}, pts, mask);
    const auto mesh = extract_surface(sel);
    const auto cls = classify_boundary(mesh, sel, mf, meta, single_box_brush(box));
    std::size_t face = 0, right = 0;
    for (std::size_t v = 0; v < cls.size(); ++v) {
        const auto& [in, out] = mesh.vertex_edges[v];
        if (out.x != in.x + 1 || out.x >= std::int64_t(n)) continue;  // the face perpendicular to x at p0 = 0.5
        ++face;
        right += cls[v] == 0;
        if (cls[v] == 1) fail(o, "unconstrained parameter reported as bounding");
    }
    if (face == 0 || right != face) fail(o, fmt("ramp: %zu of %zu face vertices labelled parameter 0", right, face));
    if (o.pass) o.detail = fmt("chi = 2 for voxel and ball, ramp %zu/%zu", right, face);
    return o;
}

// ---- 7 ----

Outcome performance() {
    Outcome o;
    const std::size_t members = 10, per_member = 250000, d = 12;
    std::vector<ActivePoints> ens(members);
    parallel_each(members, [&](std::size_t m) {
        std::mt19937_64 rng(900 + m);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        auto& p = ens[m];
        p.member_id = "m" + std::to_string(m);
        p.dims = d;
        p.indices.resize(per_member);
        std::iota(p.indices.begin(), p.indices.end(), std::uint32_t{0});
        p.coords.resize(per_member * d);
        for (auto& c : p.coords) c = u(rng);
    });
    HyperBox box = HyperBox::unit(d);
    for (std::size_t k = 0; k < d; ++k) box.intervals[k] = {0.05, 0.95};
    const auto brush = single_box_brush(box);

    apply_box(box, ens[0]);  // warm caches
    auto t0 = Clock::now();
    const auto one = apply_box(box, ens[0]);
    const double single = seconds_since(t0);
    t0 = Clock::now();
    const auto all = apply_to_ensemble(brush, ens);
    const double whole = seconds_since(t0);
    std::size_t selected = 0;
    for (const auto& m : all) selected += m.count();

    const std::string summary = fmt("%zu threads: 2.5M x 12 in %.3f s, single member %.3f s (%zu selected)",
                                    thread_count(), whole, single, selected + one.count() * 0);
    if (whole >= 2.0) fail(o, summary);
    if (single >= 0.5) fail(o, summary);
    if (o.pass) o.detail = summary;
    return o;
}

// ---- 8 ----

struct Artifacts {
    std::vector<SelectionMask> masks;
    std::string layouts;
    std::string svg;
    std::string obj;
    std::string brush;
    bool operator==(const Artifacts&) const = default;
};

Artifacts run_pipeline(std::size_t threads) {
    set_thread_count(threads);
    auto cfg = default_synth_config();
    cfg.dims = {20, 20, 20};
    auto synth = synth_ensemble(11, cfg);
    normalize_ensemble(synth.manifest, synth.fields);
    std::vector<ActivePoints> active;
    for (const auto& f : synth.fields) active.push_back(active_points(f, synth.manifest.parameters));
    const auto ri = synth.manifest.representative_index();
    const auto& rep = active[ri];
    const auto rows = cluster_rows(rep, synth.ground_truth[0]);
    const auto box = brush_from_rows(rep, rows);
    const auto brush = refine_brush(box, rep, rows, BrushMode::BoxesAndEllipsoids);
    Artifacts a;
    a.masks = apply_to_ensemble(brush, active);
    const auto layouts = layout(active, a.masks, ri, ScaleMode::GlobalPerParameter);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& l : layouts) j.push_back(to_json(l));
    a.layouts = j.dump();
    a.svg = render_svg(layouts);
    const auto surf = member_surface(synth.manifest, synth.fields[ri], rep, a.masks[ri], brush, {1.0, 0.1});
    a.obj = obj_string(surf.mesh);
    a.brush = to_json(brush).dump();
    return a;
}

Outcome determinism() {
    Outcome o;
    const auto saved = thread_count();
    const auto base = run_pipeline(1);
    for (std::size_t t : {1u, 2u, 3u, 8u})
        if (!(run_pipeline(t) == base)) fail(o, fmt("artifacts differ with %zu threads", t));
    set_thread_count(saved);
    if (o.pass) o.detail = fmt("masks, layouts, SVG (%zu B), OBJ (%zu B) identical at 1/2/3/8 threads", base.svg.size(), base.obj.size());
    return o;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    ReductionData data;
    report(1, "sah-oracle", sah_oracle_equivalence);
    report(2, "refinement-chain", refinement_chain);
    report(3, "selection-reduction", [&] {
        data = reduction_data();
        return reduction_behavior(data);
    });
    report(4, "ellipsoid-68", [&] { return ellipsoid_rule(data); });
    report(5, "violin-math", violin_math);
    report(6, "surface", surface_properties);
    report(7, "performance", performance);
    report(8, "determinism", determinism);
    return failures;
}
