// enslens command-line driver: one subcommand per pipeline stage, plus `serve`.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "enslens/brush/brush.hpp"
#include "enslens/core/cluster.hpp"
#include "enslens/core/ensemble.hpp"
#include "enslens/core/ingest.hpp"
#include "enslens/core/synth.hpp"
#include "enslens/error.hpp"
#include "enslens/pipeline/pipeline.hpp"
#include "enslens/refine/refine.hpp"
#include "enslens/service/server.hpp"
#include "enslens/spatial/surface.hpp"
#include "enslens/util/parallel.hpp"
#include "enslens/violin/violin.hpp"

namespace fs = std::filesystem;
using namespace enslens;

namespace {

// Files written by the current command; removed again if it fails.
class Outputs {
public:
    void write(const fs::path& path, const std::string& text) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        written_.push_back(path);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    void track(const fs::path& path) { written_.push_back(path); }
    void rollback() {
        std::error_code ec;
        for (auto it = written_.rbegin(); it != written_.rend(); ++it) fs::remove(*it, ec);
        written_.clear();
    }

private:
    std::vector<fs::path> written_;
};

struct BrushSource {
    std::string manifest = "manifest.json";
    std::string clusters;  // default: clusters.json next to the manifest
    std::string cluster;
    std::string brush_file;
    std::string refine;  // "", "kd", "ellipsoid"
    std::size_t passes = kDefaultPassesPerAxis;

    void add_to(CLI::App* cmd, bool allow_file) {
        cmd->add_option("--manifest", manifest, "Ensemble manifest")->capture_default_str();
        cmd->add_option("--clusters", clusters, "Cluster labels JSON (default: next to the manifest)");
        auto* c = cmd->add_option("--cluster", cluster, "Cluster label in the representative");
        if (allow_file) cmd->add_option("--brush", brush_file, "Brush JSON written by `brush`")->excludes(c);
        cmd->add_option("--refine", refine, "kd | ellipsoid")->check(CLI::IsMember({"kd", "ellipsoid"}));
        cmd->add_option("--passes", passes, "Refinement passes per axis")->check(CLI::PositiveNumber)->capture_default_str();
    }
};

struct ResolvedBrush {
    Ensemble ensemble;
    MultiParameterBrush brush;
    std::optional<std::size_t> cluster_size;
};

ResolvedBrush resolve_brush(const BrushSource& src) {
    ResolvedBrush out{load_ensemble(src.manifest), {}, std::nullopt};
    if (!src.brush_file.empty()) {
        std::ifstream in(src.brush_file);
        if (!in) throw Error(ErrorCode::MissingFile, "brush file not found: " + src.brush_file);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, e.what());
        }
        out.brush = brush_from_json(doc);
        if (doc.contains("cluster_size") && doc["cluster_size"].is_number_unsigned())
            out.cluster_size = doc["cluster_size"].get<std::size_t>();
        if (out.brush.dims() != out.ensemble.manifest.param_count())
            throw Error(ErrorCode::DimensionMismatch, "brush and ensemble differ in parameter count");
        return out;
    }
    if (src.cluster.empty()) throw Error(ErrorCode::ConfigInvalid, "either --cluster or --brush is required");
    const fs::path clusters_path =
        src.clusters.empty() ? fs::path(src.manifest).parent_path() / "clusters.json" : fs::path(src.clusters);
    const auto clusters = import_clusters(clusters_path, out.ensemble.manifest, out.ensemble.active);
    const ClusterSelection* chosen = nullptr;
    for (const auto& c : clusters)
        if (c.label == src.cluster && c.member_id == out.ensemble.manifest.representative_id) chosen = &c;
    if (!chosen) throw Error(ErrorCode::UnknownMember, "no cluster '" + src.cluster + "' in the representative");
    const auto& rep = out.ensemble.representative();
    const HyperBox box = brush_from_cluster(rep, *chosen);
    out.cluster_size = chosen->point_indices.size();
    if (src.refine.empty()) {
        out.brush = single_box_brush(box);
    } else {
        const auto mode = src.refine == "kd" ? BrushMode::BoxesOnly : BrushMode::BoxesAndEllipsoids;
        out.brush = refine_brush(box, rep, cluster_rows(rep, *chosen), mode, src.passes);
    }
    return out;
}

std::vector<double> parse_triple(const std::string& text, const char* what) {
    std::vector<double> v;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        char* end = nullptr;
        const double x = std::strtod(part.c_str(), &end);
        if (part.empty() || *end != '\0') throw Error(ErrorCode::ConfigInvalid, std::string("bad ") + what + ": " + text);
        v.push_back(x);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (v.size() != 3) throw Error(ErrorCode::ConfigInvalid, std::string(what) + " needs three comma-separated values");
    return v;
}

std::string safe_name(const std::string& id) {
    std::string out = id;
    for (char& c : out)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"enslens: multi-parameter brushing for simulation ensembles"};
    app.require_subcommand(1);
    app.fallthrough();
    std::size_t threads = 0;
    app.add_option("--threads", threads, "Worker threads (ENSEMBLE_THREADS also works)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Convert per-member CSV files to the binary format");
    std::vector<std::string> csv_files;
    std::string ingest_out, ingest_spacing = "1,1,1", ingest_dims, ingest_rep;
    ingest->add_option("files", csv_files, "CSV files, one per member")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", ingest_out, "Output directory")->required();
    ingest->add_option("--spacing", ingest_spacing, "dx,dy,dz")->capture_default_str();
    ingest->add_option("--dims", ingest_dims, "nx,ny,nz (default: from the data)");
    ingest->add_option("--representative", ingest_rep, "Representative member id");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic ensemble with planted clusters");
    std::uint64_t seed = 1;
    std::string synth_out = "synth", synth_config, preset = "default";
    synth->add_option("--seed", seed)->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
    auto* cfg_opt = synth->add_option("--config", synth_config, "Generator config JSON");
    synth->add_option("--preset", preset, "default | reduction")
        ->check(CLI::IsMember({"default", "reduction"}))
        ->excludes(cfg_opt)
        ->capture_default_str();

    // cluster
    auto* cluster = app.add_subcommand("cluster", "Density clustering of one member's active points");
    std::string cl_manifest = "manifest.json", cl_member, cl_out = "clusters.json";
    double eps = 0.05;
    std::size_t min_pts = 8;
    cluster->add_option("--manifest", cl_manifest)->capture_default_str();
    cluster->add_option("--member", cl_member, "Member id (default: representative)");
    cluster->add_option("--eps", eps)->check(CLI::PositiveNumber)->capture_default_str();
    cluster->add_option("--min-pts", min_pts)->check(CLI::PositiveNumber)->capture_default_str();
    cluster->add_option("--out", cl_out)->capture_default_str();

    // brush
    auto* brush = app.add_subcommand("brush", "Build a brush from a cluster and count it in every member");
    BrushSource brush_src;
    brush_src.add_to(brush, false);
    brush->get_option("--cluster")->required();
    std::string brush_out = ".";
    brush->add_option("--out", brush_out, "Directory for brush.json and counts.csv")->capture_default_str();

    // violins
    auto* violins = app.add_subcommand("violins", "Render one multi-parameter violin SVG per member");
    BrushSource vio_src;
    vio_src.add_to(violins, true);
    std::string scale = "global", vio_out = "violins";
    violins->add_option("--scale", scale, "global | local")->check(CLI::IsMember({"global", "local"}))->capture_default_str();
    violins->add_option("--out", vio_out, "Output directory")->capture_default_str();

    // mesh
    auto* mesh = app.add_subcommand("mesh", "Extract the selected region of a member as an OBJ surface");
    BrushSource mesh_src;
    mesh_src.add_to(mesh, true);
    std::string mesh_member, mesh_compare, mesh_out = "surface.obj";
    double sigma = kDefaultSmoothingSigma, iso = kDefaultIso;
    mesh->add_option("--member", mesh_member)->required();
    mesh->add_option("--compare", mesh_compare, "Second member for overlap statistics");
    mesh->add_option("--smooth", sigma, "Gaussian sigma in voxels, 0 disables")->check(CLI::NonNegativeNumber)->capture_default_str();
    mesh->add_option("--iso", iso)->capture_default_str();
    mesh->add_option("--out", mesh_out)->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket analysis service");
    std::string serve_config, data_root;
    int port = -1;
    std::string address;
    serve->add_option("--config", serve_config, "JSON config file");
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--address", address);
    serve->add_option("--data-root", data_root);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    if (threads > 0) set_thread_count(threads);

    Outputs outputs;
    try {
        if (*ingest) {
            CsvIngestOptions opt;
            const auto s = parse_triple(ingest_spacing, "spacing");
            opt.spacing = {s[0], s[1], s[2]};
            if (!ingest_dims.empty()) {
                const auto d = parse_triple(ingest_dims, "dims");
                opt.dims = GridDims{std::size_t(d[0]), std::size_t(d[1]), std::size_t(d[2])};
            }
            if (!ingest_rep.empty()) opt.representative = ingest_rep;
            std::vector<fs::path> files(csv_files.begin(), csv_files.end());
            const fs::path out(ingest_out);
            outputs.track(out / "manifest.json");
            for (const auto& f : files) outputs.track(out / ("member_" + f.stem().string() + ".bin"));
            const auto m = ingest_csv(files, out, opt);
            std::printf("ingested %zu members, %zu parameters, grid %zux%zux%zu\n", m.member_count(), m.param_count(),
                        m.dims.nx, m.dims.ny, m.dims.nz);
        } else if (*synth) {
            SynthConfig cfg;
            if (!synth_config.empty()) {
                std::ifstream in(synth_config);
                if (!in) throw Error(ErrorCode::MissingFile, "config not found: " + synth_config);
                try {
                    cfg = synth_config_from_json(nlohmann::json::parse(in));
                } catch (const nlohmann::json::exception& e) {
                    throw Error(ErrorCode::ConfigInvalid, e.what());
                }
            } else {
                cfg = preset == "reduction" ? reduction_synth_config() : default_synth_config();
            }
            validate(cfg);
            const fs::path out(synth_out);
            outputs.track(out / "manifest.json");
            outputs.track(out / "clusters.json");
            for (std::size_t m = 0; m < cfg.members; ++m) {
                char id[32];
                std::snprintf(id, sizeof id, "member_m%02zu.bin", m);
                outputs.track(out / id);
            }
            const auto ens = synth_ensemble(seed, cfg);
            const auto m = write_synth_ensemble(ens, out);
            std::printf("wrote %zu members to %s\n", m.member_count(), out.string().c_str());
        } else if (*cluster) {
            const auto ens = load_ensemble(cl_manifest);
            const auto& pts = cl_member.empty() ? ens.representative() : ens.member(cl_member);
            const auto clusters = baseline_cluster(pts, eps, min_pts);
            outputs.track(cl_out);
            export_clusters(clusters, cl_out);
            std::printf("%zu clusters in %s\n", clusters.size(), pts.member_id.c_str());
        } else if (*brush) {
            const auto rb = resolve_brush(brush_src);
            const auto masks = apply_to_ensemble(rb.brush, rb.ensemble.active);
            const auto rows = count_table(masks, rb.cluster_size);
            auto doc = to_json(rb.brush);
            doc["cluster_label"] = brush_src.cluster;
            doc["cluster_size"] = rb.cluster_size.value_or(0);
            const fs::path out(brush_out);
            outputs.write(out / "brush.json", doc.dump(2) + "\n");
            outputs.write(out / "counts.csv", count_table_csv(rows));
            std::fputs(count_table_csv(rows).c_str(), stdout);
        } else if (*violins) {
            const auto rb = resolve_brush(vio_src);
            const auto& ens = rb.ensemble;
            const auto masks = apply_to_ensemble(rb.brush, ens.active);
            const auto layouts =
                layout(ens.active, masks, ens.manifest.representative_index(), scale_mode_from_string(scale));
            const fs::path out(vio_out);
            nlohmann::json all = nlohmann::json::array();
            for (const auto& l : layouts) {
                outputs.write(out / ("violin_" + safe_name(l.member_id) + ".svg"),
                              render_svg(std::span<const ViolinLayout>(&l, 1)));
                all.push_back(to_json(l));
            }
            outputs.write(out / "layouts.json", all.dump() + "\n");
            std::printf("wrote %zu violin plots to %s\n", layouts.size(), out.string().c_str());
        } else if (*mesh) {
            const auto rb = resolve_brush(mesh_src);
            const auto& ens = rb.ensemble;
            const MeshOptions opt{sigma, iso};
            auto surface_of = [&](const std::string& id) {
                const auto idx = ens.manifest.member_index(id);
                const auto raw = load_member(ens.manifest, idx);
                return member_surface(ens.manifest, raw, ens.active[idx], apply_brush(rb.brush, ens.active[idx]),
                                      rb.brush, opt);
            };
            const auto a = surface_of(mesh_member);
            const fs::path out(mesh_out);
            outputs.write(out, obj_string(a.mesh));
            if (!mesh_compare.empty()) {
                const auto b = surface_of(mesh_compare);
                const fs::path stem = out.parent_path() / out.stem();
                outputs.write(stem.string() + "_" + safe_name(mesh_compare) + ".obj", obj_string(b.mesh));
                nlohmann::json stats = to_json(overlap_stats(a.selection, b.selection));
                stats["a"] = mesh_member;
                stats["b"] = mesh_compare;
                outputs.write(stem.string() + "_overlap.json", stats.dump(2) + "\n");
            }
            std::printf("%zu vertices, %zu triangles\n", a.mesh.vertex_count(), a.mesh.triangles.size());
        } else if (*serve) {
            ServerConfig cfg;
            if (!serve_config.empty()) cfg = load_server_config(serve_config);
            if (port >= 0) cfg.port = static_cast<std::uint16_t>(port);
            if (!address.empty()) cfg.address = address;
            if (!data_root.empty()) cfg.data_root = data_root;
            if (threads > 0) cfg.threads = threads;

            sigset_t set;
            sigemptyset(&set);
            sigaddset(&set, SIGINT);
            sigaddset(&set, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &set, nullptr);
            Server server(cfg);
            server.start();
            std::printf("listening on %s:%u\n", cfg.address.c_str(), unsigned(server.port()));
            std::fflush(stdout);
            int sig = 0;
            sigwait(&set, &sig);
            server.stop();
        }
    } catch (const std::exception& e) {
        outputs.rollback();
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
