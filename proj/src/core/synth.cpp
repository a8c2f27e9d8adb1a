#include "enslens/core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "enslens/error.hpp"
#include "enslens/util/linalg.hpp"
#include "enslens/util/parallel.hpp"

namespace enslens {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Engine-independent transforms over mt19937_64 so the streams are fixed by the seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string member_name(std::size_t m, std::size_t count) {
    const int width = count <= 100 ? 2 : (count <= 1000 ? 3 : 6);
    std::string digits = std::to_string(m);
    return "m" + std::string(std::max<int>(0, width - static_cast<int>(digits.size())), '0') + digits;
}

// The `size` free grid points nearest to `center` (index units), ties by flat index.
std::vector<std::uint32_t> spatial_blob(const GridDims& dims, const std::array<double, 3>& center, std::size_t size,
                                        const std::vector<char>& taken) {
    std::vector<std::pair<double, std::uint32_t>> cand;
    cand.reserve(dims.size());
    for (std::size_t z = 0; z < dims.nz; ++z)
        for (std::size_t y = 0; y < dims.ny; ++y)
            for (std::size_t x = 0; x < dims.nx; ++x) {
                const std::size_t flat = dims.flat(x, y, z);
                if (taken[flat]) continue;
                const double ddx = double(x) - center[0], ddy = double(y) - center[1], ddz = double(z) - center[2];
                cand.emplace_back(ddx * ddx + ddy * ddy + ddz * ddz, static_cast<std::uint32_t>(flat));
            }
    size = std::min(size, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(size), cand.end());
    std::vector<std::uint32_t> out(size);
    for (std::size_t i = 0; i < size; ++i) out[i] = cand[i].second;
    std::sort(out.begin(), out.end());
    return out;
}

double param_scale(std::size_t p) { return 1.0 + static_cast<double>(p); }

struct MemberResult {
    MemberField field;
    std::vector<std::vector<std::uint32_t>> blobs;
};

MemberResult synth_member(std::uint64_t seed, const SynthConfig& cfg, std::size_t m, bool representative,
                          const std::vector<std::vector<double>>& factors) {
    Rng rng(mix(seed ^ mix(m + 1)));
    const std::size_t n = cfg.dims.size();
    const std::size_t d = cfg.params;

    MemberResult out;
    out.field.member_id = member_name(m, cfg.members);
    out.field.dims = cfg.dims;
    out.field.param_count = d;
    out.field.values.assign(n * d, 0.0f);
    std::vector<char> taken(n, 0);

    std::vector<double> z(d), sample(d);
    for (std::size_t c = 0; c < cfg.clusters.size(); ++c) {
        const auto& cl = cfg.clusters[c];
        std::vector<double> center = cl.center;
        std::array<double, 3> where{cl.spatial_center[0] * double(cfg.dims.nx - 1),
                                    cl.spatial_center[1] * double(cfg.dims.ny - 1),
                                    cl.spatial_center[2] * double(cfg.dims.nz - 1)};
        if (!representative) {
            for (auto& v : center) v += cl.member_jitter * rng.normal();
            for (auto& w : where) w += rng.uniform(-2.0, 2.0);
        }
        auto blob = spatial_blob(cfg.dims, where, cl.size, taken);
        const auto& chol = factors[c];
        for (auto flat : blob) {
            taken[flat] = 1;
            double norm_sq = 0.0;
            do {
                for (auto& v : z) v = rng.normal();
                norm_sq = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    double v = center[i];
                    for (std::size_t k = 0; k <= i; ++k) v += chol[i * d + k] * z[k];
                    sample[i] = std::clamp(v, 0.0, 1.0);
                    norm_sq += sample[i] * sample[i];
                }
            } while (std::sqrt(norm_sq) < 0.11);
            for (std::size_t p = 0; p < d; ++p)
                out.field.values[p * n + flat] = static_cast<float>(sample[p] * param_scale(p));
        }
        out.blobs.push_back(std::move(blob));
    }

    for (std::size_t flat = 0; flat < n; ++flat) {
        if (taken[flat]) continue;
        if (rng.uniform() >= cfg.background_density) continue;
        for (std::size_t p = 0; p < d; ++p) {
            const double lo = cfg.background_lo.empty() ? 0.0 : cfg.background_lo[p];
            const double hi = cfg.background_hi.empty() ? 1.0 : cfg.background_hi[p];
            out.field.values[p * n + flat] = static_cast<float>(rng.uniform(lo, hi) * param_scale(p));
        }
    }
    return out;
}

std::vector<double> vec_or(const json& doc, const char* key, std::vector<double> fallback) {
    return doc.contains(key) ? doc.at(key).get<std::vector<double>>() : fallback;
}

}  // namespace

void validate(const SynthConfig& cfg) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
    if (cfg.members < 1) fail("members must be >= 1");
    if (cfg.params < 1) fail("params must be >= 1");
    if (cfg.dims.size() == 0) fail("grid must be non-empty");
    if (cfg.dims.size() > 0xffffffffULL) fail("grid too large");
    if (!(cfg.background_density >= 0.0 && cfg.background_density < 1.0)) fail("background_density must be in [0,1)");
    for (const auto* bound : {&cfg.background_lo, &cfg.background_hi})
        if (!bound->empty() && bound->size() != cfg.params) fail("background bounds need one value per parameter");
    for (std::size_t p = 0; p < cfg.background_lo.size() && p < cfg.background_hi.size(); ++p)
        if (!(0.0 <= cfg.background_lo[p] && cfg.background_lo[p] <= cfg.background_hi[p] &&
              cfg.background_hi[p] <= 1.0))
            fail("background bounds must satisfy 0 <= lo <= hi <= 1");
    std::size_t total = 0;
    for (const auto& c : cfg.clusters) {
        if (c.center.size() != cfg.params) fail("cluster center needs one value per parameter");
        if (c.covariance.size() != cfg.params * cfg.params) fail("cluster covariance must be D x D");
        if (c.size == 0) fail("cluster size must be positive");
        if (c.member_jitter < 0.0) fail("member_jitter must be non-negative");
        double norm_sq = 0.0;
        for (double v : c.center) {
            if (!(v >= 0.0 && v <= 1.0)) fail("cluster center must lie in [0,1]^D");
            norm_sq += v * v;
        }
        if (std::sqrt(norm_sq) < 0.2) fail("cluster center too close to the origin to be active");
        for (std::size_t i = 0; i < cfg.params; ++i)
            for (std::size_t j = 0; j < cfg.params; ++j)
                if (std::abs(c.covariance[i * cfg.params + j] - c.covariance[j * cfg.params + i]) > 1e-12)
                    fail("cluster covariance must be symmetric");
        if (linalg::cholesky(c.covariance, cfg.params).empty()) fail("cluster covariance must be positive definite");
        for (double s : c.spatial_center)
            if (!(s >= 0.0 && s <= 1.0)) fail("spatial_center must lie in [0,1]^3");
        total += c.size;
    }
    if (total >= cfg.dims.size()) fail("planted clusters must leave free grid points");
}

SynthConfig synth_config_from_json(const json& doc) {
    SynthConfig cfg;
    try {
        cfg.members = doc.value("members", cfg.members);
        cfg.params = doc.value("params", cfg.params);
        if (doc.contains("grid")) {
            const auto g = doc.at("grid").get<std::vector<std::size_t>>();
            if (g.size() != 3) throw Error(ErrorCode::ConfigInvalid, "grid needs 3 entries");
            cfg.dims = {g[0], g[1], g[2]};
        }
        if (doc.contains("spacing")) {
            const auto s = doc.at("spacing").get<std::vector<double>>();
            if (s.size() != 3) throw Error(ErrorCode::ConfigInvalid, "spacing needs 3 entries");
            cfg.spacing = {s[0], s[1], s[2]};
        }
        cfg.background_density = doc.value("background_density", cfg.background_density);
        cfg.background_lo = vec_or(doc, "background_lo", {});
        cfg.background_hi = vec_or(doc, "background_hi", {});
        for (const auto& c : doc.value("clusters", json::array())) {
            PlantedCluster pc;
            pc.center = c.at("center").get<std::vector<double>>();
            pc.covariance = c.at("covariance").get<std::vector<double>>();
            pc.size = c.at("size").get<std::size_t>();
            pc.member_jitter = c.value("member_jitter", 0.0);
            if (c.contains("spatial_center")) {
                const auto s = c.at("spatial_center").get<std::vector<double>>();
                if (s.size() != 3) throw Error(ErrorCode::ConfigInvalid, "spatial_center needs 3 entries");
                pc.spatial_center = {s[0], s[1], s[2]};
            }
            cfg.clusters.push_back(std::move(pc));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, e.what());
    }
    validate(cfg);
    return cfg;
}

json to_json(const SynthConfig& cfg) {
    json doc;
    doc["members"] = cfg.members;
    doc["params"] = cfg.params;
    doc["grid"] = {cfg.dims.nx, cfg.dims.ny, cfg.dims.nz};
    doc["spacing"] = {cfg.spacing.dx, cfg.spacing.dy, cfg.spacing.dz};
    doc["background_density"] = cfg.background_density;
    if (!cfg.background_lo.empty()) doc["background_lo"] = cfg.background_lo;
    if (!cfg.background_hi.empty()) doc["background_hi"] = cfg.background_hi;
    json clusters = json::array();
    for (const auto& c : cfg.clusters)
        clusters.push_back({{"center", c.center},
                            {"covariance", c.covariance},
                            {"size", c.size},
                            {"member_jitter", c.member_jitter},
                            {"spatial_center", c.spatial_center}});
    doc["clusters"] = clusters;
    return doc;
}

SynthConfig default_synth_config() {
    SynthConfig cfg;
    cfg.members = 4;
    cfg.params = 4;
    cfg.dims = {24, 24, 24};
    cfg.background_density = 0.2;
    PlantedCluster c;
    c.center = {0.6, 0.5, 0.4, 0.5};
    const double s = 0.05;
    c.covariance.assign(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) c.covariance[i * 4 + i] = s * s;
    c.covariance[1] = c.covariance[4] = 0.9 * s * s;
    c.size = 500;
    c.member_jitter = 0.02;
    cfg.clusters.push_back(c);
    return cfg;
}

SynthConfig reduction_synth_config() {
    SynthConfig cfg;
    cfg.members = 10;
    cfg.params = 9;
    cfg.dims = {40, 40, 40};
    cfg.spacing = {1.0, 1.0, 0.5};
    const std::size_t d = cfg.params;
    // Long axis along the main diagonal, thin in the orthogonal complement.
    const double along = 0.08 * 0.08;
    const double across = 0.012 * 0.012;
    PlantedCluster c;
    c.center.assign(d, 0.5);
    c.covariance.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            c.covariance[i * d + j] = (i == j ? across : 0.0) + (along - across) / double(d);
    c.size = 2000;
    c.member_jitter = 0.01;
    cfg.clusters.push_back(c);
    cfg.background_density = 0.6;
    cfg.background_lo.assign(d, 0.4);
    cfg.background_hi.assign(d, 0.6);
    return cfg;
}

SynthEnsemble synth_ensemble(std::uint64_t seed, const SynthConfig& cfg) {
    validate(cfg);
    std::vector<std::vector<double>> factors;
    for (const auto& c : cfg.clusters) factors.push_back(linalg::cholesky(c.covariance, cfg.params));

    SynthEnsemble out;
    auto& m = out.manifest;
    m.dims = cfg.dims;
    m.spacing = cfg.spacing;
    for (std::size_t p = 0; p < cfg.params; ++p)
        m.parameters.push_back({p, "p" + std::to_string(p), "u" + std::to_string(p), 0.0, 0.0});

    std::vector<MemberResult> results(cfg.members);
    parallel_each(cfg.members, [&](std::size_t i) { results[i] = synth_member(seed, cfg, i, i == 0, factors); });

    // Keep the ensemble minimum at exactly 0 so normalization never shrinks planted norms.
    {
        auto& rep = results[0];
        const std::size_t n = cfg.dims.size();
        bool has_zero = false;
        std::vector<char> in_blob(n, 0);
        for (const auto& b : rep.blobs)
            for (auto f : b) in_blob[f] = 1;
        std::size_t last_free = n;
        for (std::size_t flat = 0; flat < n && !has_zero; ++flat) {
            if (in_blob[flat]) continue;
            last_free = flat;
            bool zero = true;
            for (std::size_t p = 0; p < cfg.params && zero; ++p) zero = rep.field.values[p * n + flat] == 0.0f;
            has_zero = zero;
        }
        if (!has_zero && last_free < n)
            for (std::size_t p = 0; p < cfg.params; ++p) rep.field.values[p * n + last_free] = 0.0f;
    }

    for (std::size_t i = 0; i < cfg.members; ++i) {
        m.members.push_back({results[i].field.member_id, "member_" + results[i].field.member_id + ".bin"});
        out.fields.push_back(std::move(results[i].field));
    }
    m.representative_id = m.members.front().id;
    for (std::size_t c = 0; c < cfg.clusters.size(); ++c)
        out.ground_truth.push_back({m.representative_id, "gt" + std::to_string(c), results[0].blobs[c]});
    return out;
}

EnsembleManifest write_synth_ensemble(const SynthEnsemble& ens, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, out_dir.string() + ": " + ec.message());
    EnsembleManifest m = ens.manifest;
    for (std::size_t i = 0; i < m.members.size(); ++i) {
        m.members[i].file = out_dir / m.members[i].file.filename();
        write_member(ens.fields[i], m.members[i].file);
    }
    save_manifest(m, out_dir / "manifest.json");
    export_clusters(ens.ground_truth, out_dir / "clusters.json");
    return m;
}

}  // namespace enslens
