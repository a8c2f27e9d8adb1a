#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "enslens/core/cluster.hpp"
#include "enslens/core/ensemble.hpp"
#include "enslens/core/ingest.hpp"
#include "enslens/core/synth.hpp"
#include "enslens/error.hpp"
#include "test_support.hpp"

using namespace enslens;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an enslens::Error");
    return ErrorCode::IoError;
}

// Manifest + member files for the given fields (parameter-major float32).
fs::path write_ensemble(const fs::path& dir, GridDims dims, std::size_t params, const std::vector<MemberField>& fields) {
    json doc;
    doc["grid_dims"] = {dims.nx, dims.ny, dims.nz};
    doc["grid_spacing"] = {1.0, 1.0, 1.0};
    doc["parameters"] = json::array();
    for (std::size_t p = 0; p < params; ++p) doc["parameters"].push_back({{"name", "p" + std::to_string(p)}});
    doc["members"] = json::array();
    for (const auto& f : fields) {
        write_member(f, dir / ("member_" + f.member_id + ".bin"));
        doc["members"].push_back({{"id", f.member_id}, {"file", "member_" + f.member_id + ".bin"}});
    }
    doc["representative"] = fields.front().member_id;
    testing::write_file(dir / "manifest.json", doc.dump());
    return dir / "manifest.json";
}

MemberField field(std::string id, GridDims dims, std::size_t params, std::vector<float> values) {
    MemberField f{std::move(id), dims, params, std::move(values)};
    REQUIRE(f.values.size() == dims.size() * params);
    return f;
}

}  // namespace

TEST_CASE("load_manifest: smallest legal input") {
    testing::TempDir dir;
    const GridDims dims{2, 2, 1};
    const auto path = write_ensemble(dir.path(), dims, 1, {field("a", dims, 1, {0, 1, 2, 3})});
    const auto m = load_manifest(path);
    CHECK(m.member_count() == 1);
    CHECK(m.param_count() == 1);
    CHECK(m.dims == dims);
    CHECK(m.representative_id == "a");
}

TEST_CASE("load_manifest: large manifest is accepted without reading data") {
    testing::TempDir dir;
    json doc;
    doc["grid_dims"] = {700, 500, 35};
    doc["grid_spacing"] = {1, 1, 1};
    doc["parameters"] = json::array();
    for (int p = 0; p < 12; ++p) doc["parameters"].push_back({{"name", "q" + std::to_string(p)}});
    doc["members"] = json::array();
    const std::uintmax_t bytes = 700ull * 500 * 35 * 12 * 4;
    for (int m = 0; m < 96; ++m) {
        const std::string file = "m" + std::to_string(m) + ".bin";
        { std::ofstream touch(dir / file); }
        fs::resize_file(dir / file, bytes);  // sparse, nothing is read
        doc["members"].push_back({{"id", "m" + std::to_string(m)}, {"file", file}});
    }
    doc["representative"] = "m0";
    testing::write_file(dir / "manifest.json", doc.dump());
    const auto m = load_manifest(dir / "manifest.json");
    CHECK(m.member_count() == 96);
    CHECK(m.param_count() == 12);
    CHECK(m.dims.size() == 700u * 500u * 35u);
}

TEST_CASE("load_manifest: errors") {
    testing::TempDir dir;
    const GridDims dims{2, 2, 1};
    const auto path = write_ensemble(dir.path(), dims, 1, {field("a", dims, 1, {0, 1, 2, 3})});
    SUBCASE("member file one float short") {
        fs::resize_file(dir / "member_a.bin", 12);
        CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::InconsistentDims);
    }
    SUBCASE("missing member file") {
        fs::remove(dir / "member_a.bin");
        CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::MissingFile);
    }
    SUBCASE("missing manifest") { CHECK(code_of([&] { load_manifest(dir / "nope.json"); }) == ErrorCode::MissingFile); }
    SUBCASE("schema violation") {
        testing::write_file(path, R"({"grid_dims":[2,2],"grid_spacing":[1,1,1]})");
        CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::SchemaViolation);
    }
    SUBCASE("unknown member lookup") {
        const auto m = load_manifest(path);
        CHECK(code_of([&] { m.member_index("zz"); }) == ErrorCode::UnknownMember);
    }
}

TEST_CASE("load_member rejects non-finite values") {
    testing::TempDir dir;
    const GridDims dims{2, 1, 1};
    const auto path = write_ensemble(dir.path(), dims, 1, {field("a", dims, 1, {0, NAN})});
    const auto m = load_manifest(path);
    CHECK(code_of([&] { load_member(m, 0); }) == ErrorCode::SchemaViolation);
}

TEST_CASE("member binary round trip") {
    testing::TempDir dir;
    const GridDims dims{3, 2, 2};
    std::vector<float> v(dims.size() * 2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(i) * 0.25f - 1.0f;
    const auto path = write_ensemble(dir.path(), dims, 2, {field("a", dims, 2, v)});
    const auto m = load_manifest(path);
    const auto f = load_member(m, 0);
    CHECK(f.values == v);
    CHECK(f.value(1, 3) == v[dims.size() + 3]);
}

TEST_CASE("normalize_ensemble") {
    const GridDims dims{11, 1, 1};
    EnsembleManifest m;
    m.dims = dims;
    m.parameters = {ParameterMeta{0, "p", "", 0, 0}};
    SUBCASE("min/max composed over members") {
        std::vector<float> a(11), b(11);
        for (int i = 0; i <= 10; ++i) {
            a[i] = float(i);
            b[i] = 5.0f + 1.5f * float(i);
        }
        std::vector<MemberField> fields{field("a", dims, 1, a), field("b", dims, 1, b)};
        normalize_ensemble(m, fields);
        CHECK(m.parameters[0].global_min == 0.0);
        CHECK(m.parameters[0].global_max == 20.0);
    }
    SUBCASE("constant parameter") {
        std::vector<MemberField> fields{field("a", dims, 1, std::vector<float>(11, 7.0f))};
        normalize_ensemble(m, fields);
        CHECK(m.parameters[0].global_min == 7.0);
        CHECK(m.parameters[0].global_max == 7.0);
        CHECK(m.parameters[0].normalize(7.0) == 0.0);
        CHECK(active_points(fields[0], m.parameters).size() == 0);
    }
    SUBCASE("seeded members equal a brute-force scan") {
        std::mt19937 rng(5);
        std::normal_distribution<float> g(3.0f, 10.0f);
        const GridDims d3{4, 3, 2};
        EnsembleManifest m3;
        m3.dims = d3;
        for (std::size_t p = 0; p < 3; ++p) m3.parameters.push_back({p, "p" + std::to_string(p), "", 0, 0});
        std::vector<MemberField> fields;
        std::vector<double> lo(3, INFINITY), hi(3, -INFINITY);
        for (int k = 0; k < 5; ++k) {
            std::vector<float> v(d3.size() * 3);
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] = g(rng);
                const std::size_t p = i / d3.size();
                lo[p] = std::min(lo[p], double(v[i]));
                hi[p] = std::max(hi[p], double(v[i]));
            }
            fields.push_back(field("m" + std::to_string(k), d3, 3, v));
        }
        normalize_ensemble(m3, fields);
        for (std::size_t p = 0; p < 3; ++p) {
            CHECK(m3.parameters[p].global_min == lo[p]);
            CHECK(m3.parameters[p].global_max == hi[p]);
        }
    }
}

TEST_CASE("active_points") {
    const GridDims dims{4, 1, 1};
    std::vector<ParameterMeta> meta{{0, "a", "", 0, 10}, {1, "b", "", 0, 10}};
    SUBCASE("all-zero member") {
        const auto f = field("m", dims, 2, std::vector<float>(8, 0.0f));
        CHECK(active_points(f, meta).size() == 0);
    }
    SUBCASE("norm 0.1 is on the inclusive boundary") {
        // normalized rows: (0.1,0), (0.05,0.05), (0,0), (0.3,0.4)
        const auto f = field("m", dims, 2, {1.0f, 0.5f, 0.0f, 3.0f, 0.0f, 0.5f, 0.0f, 4.0f});
        const auto pts = active_points(f, meta);
        REQUIRE(pts.size() == 2);
        CHECK(pts.indices[0] == 0);
        CHECK(pts.indices[1] == 3);
        CHECK(pts.coord(1, 1) == doctest::Approx(0.4));
        CHECK(pts.position_of(3) == std::optional<std::size_t>(1));
        CHECK_FALSE(pts.position_of(1));
    }
    SUBCASE("seeded member equals brute-force norm check") {
        std::mt19937 rng(9);
        std::uniform_real_distribution<float> u(0.0f, 1.2f);
        const GridDims big{70, 60, 9};  // spans several internal chunks
        std::vector<float> v(big.size() * 2);
        for (auto& x : v) x = u(rng) * u(rng) * u(rng);
        const auto f = field("m", big, 2, v);
        std::vector<ParameterMeta> mm{{0, "a", "", 0, 1.2}, {1, "b", "", 0, 1.2}};
        const auto pts = active_points(f, mm);
        std::vector<std::uint32_t> oracle;
        for (std::size_t i = 0; i < big.size(); ++i) {
            const float a = float(mm[0].normalize(v[i])), b = float(mm[1].normalize(v[big.size() + i]));
            if (std::sqrt(double(a) * a + double(b) * b) >= 0.1) oracle.push_back(std::uint32_t(i));
        }
        CHECK(pts.indices == oracle);
        CHECK(std::is_sorted(pts.indices.begin(), pts.indices.end()));
        for (std::size_t r = 0; r < pts.size(); ++r) {
            const auto row = pts.row(r);
            CHECK(std::sqrt(double(row[0]) * row[0] + double(row[1]) * row[1]) >= 0.1);
        }
    }
}

TEST_CASE("import and export clusters") {
    testing::TempDir dir;
    const GridDims dims{5, 1, 1};
    const auto path = write_ensemble(dir.path(), dims, 1, {field("a", dims, 1, {1, 2, 0, 4, 5})});
    const auto ens = load_ensemble(path);
    SUBCASE("three valid indices") {
        testing::write_file(dir / "c.json", R"({"member":"a","label":"x","indices":[4,0,1]})");
        const auto c = import_clusters(dir / "c.json", ens.manifest, ens.active);
        REQUIRE(c.size() == 1);
        CHECK(c[0].point_indices == std::vector<std::uint32_t>{0, 1, 4});
    }
    SUBCASE("index of a norm-filtered point") {
        testing::write_file(dir / "c.json", R"({"member":"a","label":"x","indices":[2]})");
        CHECK(code_of([&] { import_clusters(dir / "c.json", ens.manifest, ens.active); }) == ErrorCode::NotActivePoint);
    }
    SUBCASE("out of range and unknown member") {
        testing::write_file(dir / "c.json", R"({"member":"a","label":"x","indices":[9]})");
        CHECK(code_of([&] { import_clusters(dir / "c.json", ens.manifest, ens.active); }) == ErrorCode::IndexOutOfRange);
        testing::write_file(dir / "d.json", R"({"member":"q","label":"x","indices":[1]})");
        CHECK(code_of([&] { import_clusters(dir / "d.json", ens.manifest, ens.active); }) == ErrorCode::UnknownMember);
    }
    SUBCASE("round trip of a baseline_cluster result") {
        const auto found = baseline_cluster(ens.active[0], 0.3, 2);
        REQUIRE_FALSE(found.empty());
        export_clusters(found, dir / "rt.json");
        const auto back = import_clusters(dir / "rt.json", ens.manifest, ens.active);
        REQUIRE(back.size() == found.size());
        for (std::size_t i = 0; i < back.size(); ++i) {
            CHECK(back[i].label == found[i].label);
            CHECK(back[i].point_indices == found[i].point_indices);
        }
    }
}

TEST_CASE("baseline_cluster") {
    SUBCASE("two well separated blobs") {
        std::mt19937 rng(2);
        std::normal_distribution<float> g(0.0f, 0.01f);
        std::vector<std::vector<float>> rows;
        for (int i = 0; i < 200; ++i) rows.push_back({0.2f + g(rng), 0.2f + g(rng), 0.2f + g(rng)});
        for (int i = 0; i < 200; ++i) rows.push_back({0.8f + g(rng), 0.7f + g(rng), 0.8f + g(rng)});
        const auto pts = testing::make_points("m", 3, rows);
        const auto c = baseline_cluster(pts, 0.05, 5);  // blob gap >> 3 * eps
        REQUIRE(c.size() == 2);
        CHECK(c[0].point_indices.size() + c[1].point_indices.size() == 400);
    }
    SUBCASE("single point with min_pts 2") {
        const auto pts = testing::make_points("m", 2, {{0.5f, 0.5f}});
        CHECK(baseline_cluster(pts, 0.1, 2).empty());
    }
    SUBCASE("identical points") {
        const auto pts = testing::make_points("m", 2, std::vector<std::vector<float>>(50, {0.4f, 0.4f}));
        const auto c = baseline_cluster(pts, 0.01, 3);
        REQUIRE(c.size() == 1);
        CHECK(c[0].point_indices.size() == 50);
    }
    SUBCASE("agrees with a brute-force DBSCAN core/reachability oracle") {
        const auto pts = testing::random_points("m", 600, 4, 17);
        const double eps = 0.12;
        const std::size_t min_pts = 4;
        const auto c = baseline_cluster(pts, eps, min_pts);
        auto dist2 = [&](std::size_t i, std::size_t j) {
            double s = 0;
            for (std::size_t p = 0; p < 4; ++p) s += std::pow(double(pts.coord(i, p)) - pts.coord(j, p), 2);
            return s;
        };
        std::vector<bool> core(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            std::size_t n = 0;
            for (std::size_t j = 0; j < pts.size(); ++j) n += dist2(i, j) <= eps * eps;
            core[i] = n >= min_pts;
        }
        // Every clustered point is core or within eps of a core point; all core points are clustered.
        std::set<std::uint32_t> clustered;
        for (const auto& s : c) clustered.insert(s.point_indices.begin(), s.point_indices.end());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (core[i]) CHECK(clustered.count(std::uint32_t(i)) == 1);
            if (!clustered.count(std::uint32_t(i))) {
                for (std::size_t j = 0; j < pts.size(); ++j) CHECK_FALSE((core[j] && dist2(i, j) <= eps * eps));
            }
        }
    }
}

TEST_CASE("synth_ensemble") {
    const auto cfg = default_synth_config();
    SUBCASE("seed 1, one planted cluster of 500 points") {
        const auto ens = synth_ensemble(1, cfg);
        REQUIRE(ens.ground_truth.size() == 1);
        CHECK(ens.ground_truth[0].point_indices.size() == 500);
        CHECK(ens.ground_truth[0].label == "gt0");
        CHECK(ens.manifest.member_count() == cfg.members);
    }
    SUBCASE("same seed twice gives identical files") {
        testing::TempDir a, b;
        write_synth_ensemble(synth_ensemble(7, cfg), a.path());
        write_synth_ensemble(synth_ensemble(7, cfg), b.path());
        for (const auto& entry : fs::directory_iterator(a.path()))
            CHECK(testing::read_file(entry.path()) == testing::read_file(b / entry.path().filename().string()));
        testing::TempDir c;
        write_synth_ensemble(synth_ensemble(8, cfg), c.path());
        CHECK(testing::read_file(a / "member_m01.bin") != testing::read_file(c / "member_m01.bin"));
    }
    SUBCASE("planted correlation is recovered from the labeled points") {
        testing::TempDir dir;
        write_synth_ensemble(synth_ensemble(1, cfg), dir.path());
        const auto ens = load_ensemble(dir / "manifest.json");
        const auto clusters = import_clusters(dir / "clusters.json", ens.manifest, ens.active);
        const auto& rep = ens.representative();
        std::vector<double> x, y;
        for (auto flat : clusters[0].point_indices) {
            const auto r = *rep.position_of(flat);
            // normalization is affine per parameter, so the correlation survives it
            x.push_back(rep.coord(r, 0));
            y.push_back(rep.coord(r, 1));
        }
        const double n = double(x.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
        double sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
            sxy += (x[i] - mx) * (y[i] - my);
        }
        const double target = cfg.clusters[0].covariance[1] /
                              std::sqrt(cfg.clusters[0].covariance[0] * cfg.clusters[0].covariance[cfg.params + 1]);
        CHECK(target == doctest::Approx(0.9));
        CHECK(std::abs(sxy / std::sqrt(sxx * syy) - target) <= 0.1);
    }
    SUBCASE("invalid configs") {
        auto bad = cfg;
        bad.clusters[0].covariance[1] = 5.0;  // not positive definite
        CHECK(code_of([&] { validate(bad); }) == ErrorCode::ConfigInvalid);
        bad = cfg;
        bad.clusters[0].size = cfg.dims.size() + 1;
        CHECK(code_of([&] { validate(bad); }) == ErrorCode::ConfigInvalid);
    }
    SUBCASE("config json round trip") {
        const auto back = synth_config_from_json(to_json(cfg));
        CHECK(to_json(back) == to_json(cfg));
    }
}

TEST_CASE("ingest_csv") {
    testing::TempDir dir;
    testing::write_file(dir / "a.csv", "x,y,z,t,q\n0,0,0,1.5,2\n1,0,0,2.5,0\n1,1,0,0.5,1\n");
    testing::write_file(dir / "b.csv", "x,y,z,t,q\n0,1,0,3,3\n");
    CsvIngestOptions opt;
    opt.spacing = {2.0, 2.0, 1.0};
    const auto m = ingest_csv({dir / "a.csv", dir / "b.csv"}, dir / "out", opt);
    CHECK(m.dims == GridDims{2, 2, 1});
    CHECK(m.param_count() == 2);
    CHECK(m.parameters[1].name == "q");
    CHECK(m.representative_id == "a");
    const auto back = load_manifest(dir / "out" / "manifest.json");
    const auto fb = load_member(back, 1);
    CHECK(fb.value(0, back.dims.flat(0, 1, 0)) == 3.0f);
    CHECK(fb.value(1, back.dims.flat(0, 0, 0)) == 0.0f);
    const auto fa = load_member(back, 0);
    CHECK(fa.value(0, back.dims.flat(1, 1, 0)) == 0.5f);

    testing::write_file(dir / "bad.csv", "x,y,t\n0,0,1\n");
    CHECK(code_of([&] { ingest_csv({dir / "bad.csv"}, dir / "out2"); }) == ErrorCode::SchemaViolation);
}
