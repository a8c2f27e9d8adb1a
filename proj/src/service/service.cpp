#include "enslens/service/service.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "enslens/core/ensemble.hpp"
#include "enslens/error.hpp"
#include "enslens/violin/violin.hpp"

namespace enslens {
namespace {

using nlohmann::json;

struct HttpError : std::runtime_error {
    HttpError(int s, const std::string& m) : std::runtime_error(m), status(s), message(m) {}
    int status;
    std::string message;
};

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingFile:
        case ErrorCode::UnknownMember: return 404;
        case ErrorCode::IoError: return 500;
        default: return 422;
    }
}

Response json_response(int status, const json& body) { return {status, body.dump(), "application/json"}; }

Response error_response(int status, const std::string& code, const std::string& message) {
    return json_response(status, {{"error", code}, {"message", message}});
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::string url_decode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '+') {
            out += ' ';
        } else if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
            out += static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2]));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < path.size()) {
        while (i < path.size() && path[i] == '/') ++i;
        const std::size_t j = path.find('/', i);
        const std::size_t end = j == std::string::npos ? path.size() : j;
        if (end > i) parts.push_back(path.substr(i, end - i));
        i = end;
    }
    return parts;
}

std::optional<std::string> query(const Request& r, const std::string& key) {
    auto it = r.query.find(key);
    if (it == r.query.end()) return std::nullopt;
    return it->second;
}

std::size_t size_param(const Request& r, const std::string& key, std::size_t fallback, std::size_t min_value) {
    auto v = query(r, key);
    if (!v) return fallback;
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size() || out < min_value)
        throw HttpError{422, key + " must be an integer >= " + std::to_string(min_value)};
    return out;
}

double double_param(const Request& r, const std::string& key, double fallback) {
    auto v = query(r, key);
    if (!v) return fallback;
    char* end = nullptr;
    const double out = std::strtod(v->c_str(), &end);
    if (v->empty() || end != v->c_str() + v->size() || !std::isfinite(out))
        throw HttpError{422, key + " must be a number"};
    return out;
}

json parse_body(const Request& r) {
    try {
        json doc = json::parse(r.body);
        if (!doc.is_object()) throw HttpError{422, "request body must be a JSON object"};
        return doc;
    } catch (const json::exception& e) {
        throw HttpError{422, std::string("malformed JSON: ") + e.what()};
    }
}

// Revision the client pinned with ?revision=N, checked against the snapshot.
void check_revision(const Request& r, std::uint64_t current) {
    auto v = query(r, "revision");
    if (!v) return;
    std::uint64_t want = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), want);
    if (ec != std::errc() || ptr != v->data() + v->size()) throw HttpError{422, "revision must be an integer"};
    if (want != current)
        throw HttpError{409, "stale revision " + std::to_string(want) + ", current is " + std::to_string(current)};
}

std::shared_ptr<const Revision> require_brush(const Session& s, const Request& r) {
    auto rev = s.current();
    check_revision(r, rev ? rev->number() : 0);
    if (!rev) throw HttpError{409, "no brush yet; POST /brush first"};
    return rev;
}

json manifest_summary(const Session& s) {
    const auto& m = s.ensemble().manifest;
    json params = json::array();
    for (const auto& p : m.parameters)
        params.push_back({{"index", p.index},
                          {"name", p.name},
                          {"units", p.units},
                          {"global_min", p.global_min},
                          {"global_max", p.global_max}});
    json members = json::array();
    for (std::size_t i = 0; i < m.member_count(); ++i)
        members.push_back({{"id", m.members[i].id}, {"active", s.ensemble().active[i].size()}});
    json clusters = json::array();
    for (const auto& c : s.clusters()) clusters.push_back({{"label", c.label}, {"size", c.point_indices.size()}});
    return {{"dims", {m.dims.nx, m.dims.ny, m.dims.nz}},
            {"spacing", {m.spacing.dx, m.spacing.dy, m.spacing.dz}},
            {"parameters", params},
            {"members", members},
            {"representative", m.representative_id},
            {"clusters", clusters}};
}

json revision_json(const Session& s, const Revision& rev) {
    json out = {{"session", s.id()},
                {"revision", rev.number()},
                {"provenance", to_string(rev.provenance())},
                {"base_box", to_json(rev.base_box())},
                {"brush", to_json(rev.brush())}};
    out["cluster_label"] = rev.cluster_label() ? json(*rev.cluster_label()) : json();
    return out;
}

}  // namespace

Request parse_target(std::string method, std::string_view target, std::string body) {
    Request r;
    r.method = std::move(method);
    r.body = std::move(body);
    const auto q = target.find('?');
    r.path = url_decode(target.substr(0, q));
    if (q == std::string_view::npos) return r;
    std::string_view rest = target.substr(q + 1);
    while (!rest.empty()) {
        const auto amp = rest.find('&');
        const std::string_view pair = rest.substr(0, amp);
        if (!pair.empty()) {
            const auto eq = pair.find('=');
            if (eq == std::string_view::npos)
                r.query[url_decode(pair)] = "";
            else
                r.query[url_decode(pair.substr(0, eq))] = url_decode(pair.substr(eq + 1));
        }
        if (amp == std::string_view::npos) break;
        rest.remove_prefix(amp + 1);
    }
    return r;
}

// ---- Revision ----

Revision::Revision(std::uint64_t number, Provenance provenance, std::optional<std::string> cluster_label,
                   HyperBox base_box, MultiParameterBrush brush, std::size_t member_count)
    : number_(number),
      provenance_(provenance),
      cluster_label_(std::move(cluster_label)),
      base_box_(std::move(base_box)),
      brush_(std::move(brush)),
      masks_(member_count) {}

const SelectionMask& Revision::mask(const Ensemble& ensemble, std::size_t member) const {
    std::lock_guard lock(mu_);
    auto& slot = masks_.at(member);
    if (!slot) slot = apply_brush(brush_, ensemble.active[member]);
    return *slot;
}

// ---- Session ----

Session::Session(std::string id, std::shared_ptr<const Ensemble> ensemble, std::vector<ClusterSelection> clusters)
    : id_(std::move(id)),
      ensemble_(std::move(ensemble)),
      clusters_(std::move(clusters)),
      raw_(ensemble_->manifest.member_count()) {}

std::shared_ptr<const Revision> Session::current() const {
    std::lock_guard lock(snap_mu_);
    return current_;
}

const ClusterSelection* Session::cluster(const std::string& label) const {
    for (const auto& c : clusters_)
        if (c.label == label) return &c;
    return nullptr;
}

std::shared_ptr<const MemberField> Session::raw_member(std::size_t member) const {
    std::lock_guard lock(raw_mu_);
    auto& slot = raw_.at(member);
    if (!slot) slot = std::make_shared<const MemberField>(load_member(ensemble_->manifest, member));
    return slot;
}

std::vector<CountRow> Session::counts(const Revision& rev) const {
    std::vector<SelectionMask> masks;
    for (std::size_t i = 0; i < ensemble_->active.size(); ++i) masks.push_back(rev.mask(*ensemble_, i));
    std::optional<std::size_t> cluster_size;
    if (rev.cluster_label())
        if (const auto* c = cluster(*rev.cluster_label())) cluster_size = c->point_indices.size();
    return count_table(masks, cluster_size);
}

std::string Session::event_json(const Revision& rev) const {
    const auto rows = counts(rev);
    return json{{"type", "brush"},
                {"session", id_},
                {"revision", rev.number()},
                {"provenance", to_string(rev.provenance())},
                {"counts", to_json(rows)}}
        .dump();
}

std::shared_ptr<const Revision> Session::commit(Provenance p, std::optional<std::string> label, HyperBox base,
                                                MultiParameterBrush brush) {
    // Caller holds write_mu_.
    auto rev = std::make_shared<const Revision>(next_revision_++, p, std::move(label), std::move(base), std::move(brush),
                                                ensemble_->active.size());
    {
        std::lock_guard lock(snap_mu_);
        current_ = rev;
    }
    if (!listeners_.empty()) {
        const std::string event = event_json(*rev);
        for (auto& [token, fn] : listeners_) fn(event);
    }
    return rev;
}

std::shared_ptr<const Revision> Session::set_cluster(const std::string& label) {
    std::lock_guard lock(write_mu_);
    const auto* c = cluster(label);
    if (!c) throw Error(ErrorCode::UnknownMember, "no cluster labelled '" + label + "' in the representative");
    HyperBox box = brush_from_cluster(ensemble_->representative(), *c);
    auto brush = single_box_brush(box);
    return commit(Provenance::Cluster, label, std::move(box), std::move(brush));
}

std::shared_ptr<const Revision> Session::set_box(const HyperBox& box) {
    std::lock_guard lock(write_mu_);
    if (box.dims() != ensemble_->manifest.param_count())
        throw Error(ErrorCode::DimensionMismatch, "box has " + std::to_string(box.dims()) + " intervals");
    for (const auto& iv : box.intervals)
        if (!(iv.lo >= 0.0 && iv.lo <= iv.hi && iv.hi <= 1.0))
            throw Error(ErrorCode::BadInterval, "intervals must satisfy 0 <= lo <= hi <= 1");
    return commit(Provenance::ManualEdit, std::nullopt, box, single_box_brush(box));
}

std::shared_ptr<const Revision> Session::edit(std::size_t parameter, double lo, double hi) {
    std::lock_guard lock(write_mu_);
    auto cur = current();
    if (!cur) throw HttpError{409, "no brush to edit"};
    HyperBox box = edit_interval(cur->base_box(), parameter, lo, hi);
    auto brush = single_box_brush(box);
    return commit(Provenance::ManualEdit, cur->cluster_label(), std::move(box), std::move(brush));
}

std::shared_ptr<const Revision> Session::refine(BrushMode mode, std::size_t passes) {
    std::lock_guard lock(write_mu_);
    auto cur = current();
    if (!cur) throw HttpError{409, "no brush to refine"};
    if (!cur->cluster_label()) throw HttpError{409, "refinement needs a cluster-seeded brush"};
    const auto* c = cluster(*cur->cluster_label());
    const auto& rep = ensemble_->representative();
    const auto rows = cluster_rows(rep, *c);
    auto brush = refine_brush(cur->base_box(), rep, rows, mode, passes);
    const Provenance p = mode == BrushMode::BoxesOnly ? Provenance::KdRefined : Provenance::EllipsoidRefined;
    return commit(p, cur->cluster_label(), cur->base_box(), std::move(brush));
}

std::uint64_t Session::subscribe(Listener listener) {
    std::lock_guard lock(write_mu_);
    if (auto cur = current()) listener(event_json(*cur));
    const auto token = next_token_++;
    listeners_.emplace(token, std::move(listener));
    return token;
}

void Session::unsubscribe(std::uint64_t token) {
    std::lock_guard lock(write_mu_);
    listeners_.erase(token);
}

// ---- Service ----

Service::Service(ServiceOptions options) : options_(std::move(options)) {}

std::shared_ptr<Session> Service::session(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id.empty() ? latest_ : id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::filesystem::path Service::resolve(const std::string& rel) const {
    std::filesystem::path p(rel);
    if (p.is_relative()) p = options_.data_root / p;
    return p.lexically_normal();
}

Response Service::handle(const Request& r) {
    try {
        if (r.method == "OPTIONS") return {204, "", "text/plain"};
        const auto parts = split_path(r.path);
        if (parts.size() == 1 && parts[0] == "ensemble") {
            if (r.method != "POST") throw HttpError{405, "use POST"};
            return load_ensemble(r);
        }
        if (parts.size() == 1 && parts[0] == "events") throw HttpError{426, "WebSocket upgrade required"};

        const bool known = !parts.empty() && (parts[0] == "brush" || parts[0] == "counts" || parts[0] == "violins" ||
                                              parts[0] == "members" || parts[0] == "mesh");
        if (!known) throw HttpError{404, "no route for " + r.path};
        auto s = session(query(r, "session").value_or(""));
        if (!s) throw HttpError{404, "unknown session"};

        auto want = [&](const char* method) {
            if (r.method != method) throw HttpError{405, std::string("use ") + method};
        };
        if (parts.size() == 1 && parts[0] == "brush") return want("POST"), brush(*s, r);
        if (parts.size() == 2 && parts[0] == "brush" && parts[1] == "refine") return want("POST"), refine(*s, r);
        if (parts.size() == 1 && parts[0] == "counts") return want("GET"), counts(*s, r);
        if (parts.size() == 1 && parts[0] == "violins") return want("GET"), violins(*s, r);
        if (parts.size() == 3 && parts[0] == "members" && parts[2] == "pcp") return want("GET"), pcp(*s, r, parts[1]);
        if (parts.size() == 3 && parts[0] == "members" && parts[2] == "histograms")
            return want("GET"), histograms(*s, r, parts[1]);
        if (parts.size() == 2 && parts[0] == "mesh" && parts[1] == "compare") return want("GET"), mesh_compare(*s, r);
        if (parts.size() == 2 && parts[0] == "mesh") return want("GET"), mesh(*s, r, parts[1]);
        throw HttpError{404, "no route for " + r.path};
    } catch (const HttpError& e) {
        return error_response(e.status, e.status == 409 ? "Conflict" : e.status == 404 ? "NotFound" : "Invalid",
                              e.message);
    } catch (const Error& e) {
        return error_response(status_for(e.code()), std::string(to_string(e.code())), e.what());
    } catch (const json::exception& e) {
        return error_response(422, "SchemaViolation", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "Internal", e.what());
    }
}

Response Service::load_ensemble(const Request& r) {
    const json body = parse_body(r);
    if (!body.contains("manifest_path") || !body["manifest_path"].is_string())
        throw HttpError{422, "manifest_path (string) is required"};
    const auto manifest_path = resolve(body["manifest_path"].get<std::string>());
    auto ensemble = std::make_shared<Ensemble>(enslens::load_ensemble(manifest_path));

    std::optional<std::filesystem::path> clusters_path;
    if (body.contains("clusters_path")) {
        if (!body["clusters_path"].is_string()) throw HttpError{422, "clusters_path must be a string"};
        clusters_path = resolve(body["clusters_path"].get<std::string>());
    } else if (auto guess = manifest_path.parent_path() / "clusters.json"; std::filesystem::exists(guess)) {
        clusters_path = guess;
    }
    std::vector<ClusterSelection> clusters;
    if (clusters_path) {
        for (auto& c : import_clusters(*clusters_path, ensemble->manifest, ensemble->active))
            if (c.member_id == ensemble->manifest.representative_id) clusters.push_back(std::move(c));
    }

    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mu_);
        const std::string id = "s" + std::to_string(next_session_++);
        s = std::make_shared<Session>(id, std::move(ensemble), std::move(clusters));
        sessions_[id] = s;
        latest_ = id;
    }
    json out = manifest_summary(*s);
    out["session"] = s->id();
    out["revision"] = 0;
    return json_response(200, out);
}

Response Service::brush(Session& s, const Request& r) {
    const json body = parse_body(r);
    const int given = int(body.contains("box")) + int(body.contains("cluster_label")) + int(body.contains("edit"));
    if (given != 1) throw HttpError{422, "exactly one of box, cluster_label, edit is required"};
    std::shared_ptr<const Revision> rev;
    if (body.contains("cluster_label")) {
        if (!body["cluster_label"].is_string()) throw HttpError{422, "cluster_label must be a string"};
        rev = s.set_cluster(body["cluster_label"].get<std::string>());
    } else if (body.contains("box")) {
        rev = s.set_box(box_from_json(body["box"]));
    } else {
        const json& e = body["edit"];
        if (!e.is_object() || !e.contains("parameter") || !e.contains("lo") || !e.contains("hi") ||
            !e["parameter"].is_number_unsigned() || !e["lo"].is_number() || !e["hi"].is_number())
            throw HttpError{422, "edit needs parameter (unsigned), lo, hi"};
        const auto p = e["parameter"].get<std::size_t>();
        if (p >= s.ensemble().manifest.param_count()) throw HttpError{422, "parameter out of range"};
        rev = s.edit(p, e["lo"].get<double>(), e["hi"].get<double>());
    }
    return json_response(200, revision_json(s, *rev));
}

Response Service::refine(Session& s, const Request& r) {
    const json body = parse_body(r);
    BrushMode mode = BrushMode::BoxesOnly;
    if (body.contains("mode")) {
        if (!body["mode"].is_string()) throw HttpError{422, "mode must be a string"};
        mode = brush_mode_from_string(body["mode"].get<std::string>());
    }
    std::size_t passes = kDefaultPassesPerAxis;
    if (body.contains("passes")) {
        if (!body["passes"].is_number_unsigned() || body["passes"].get<std::size_t>() < 1)
            throw HttpError{422, "passes must be a positive integer"};
        passes = body["passes"].get<std::size_t>();
    }
    auto rev = s.refine(mode, passes);
    return json_response(200, revision_json(s, *rev));
}

Response Service::counts(Session& s, const Request& r) {
    auto rev = require_brush(s, r);
    return json_response(200, {{"session", s.id()}, {"revision", rev->number()}, {"counts", to_json(s.counts(*rev))}});
}

Response Service::pcp(Session& s, const Request& r, const std::string& member) {
    const auto rev = s.current();
    check_revision(r, rev ? rev->number() : 0);
    const auto idx = s.ensemble().manifest.member_index(member);
    const auto& pts = s.ensemble().active[idx];
    const std::size_t stride = size_param(r, "stride", 1, 1);
    const std::size_t axis = size_param(r, "axis", 0, 0);
    if (axis >= pts.dims) throw HttpError{422, "axis out of range"};
    const double value = double_param(r, "value", 0.5);
    const auto order = priority_order(pts, axis, value);

    // Keep every stride-th line counted from the end, so the nearest lines always survive.
    const std::size_t n = order.permutation.size();
    json rows = json::array(), distances = json::array(), lines = json::array(), selected = json::array();
    const SelectionMask* mask = rev ? &rev->mask(s.ensemble(), idx) : nullptr;
    for (std::size_t i = (n == 0 ? 0 : (n - 1) % stride); i < n; i += stride) {
        const auto row = order.permutation[i];
        rows.push_back(row);
        distances.push_back(order.distances[i]);
        const auto c = pts.row(row);
        lines.push_back(std::vector<float>(c.begin(), c.end()));
        if (mask) selected.push_back(mask->test(row) ? 1 : 0);
    }
    json out = {{"session", s.id()},   {"revision", rev ? rev->number() : 0},
                {"member", member},    {"axis", axis},
                {"value", value},      {"stride", stride},
                {"total", n},          {"rows", rows},
                {"distances", distances}, {"lines", lines}};
    out["selected"] = mask ? selected : json();
    return json_response(200, out);
}

Response Service::histograms(Session& s, const Request& r, const std::string& member) {
    auto rev = require_brush(s, r);
    const auto idx = s.ensemble().manifest.member_index(member);
    const std::size_t bins = size_param(r, "bins", 32, 1);
    const auto& pts = s.ensemble().active[idx];
    const auto& mask = rev->mask(s.ensemble(), idx);
    json hist = json::array();
    for (std::size_t p = 0; p < pts.dims; ++p) hist.push_back(to_json(histogram_pair(pts, mask, p, bins)));
    json out = {{"session", s.id()},
                {"revision", rev->number()},
                {"member", member},
                {"bins", bins},
                {"histograms", hist},
                {"pie",
                 {{"selected", mask.count()},
                  {"total", pts.size()},
                  {"fraction", pts.size() ? double(mask.count()) / double(pts.size()) : 0.0}}}};
    out["cluster_ratio"] = json();
    if (rev->cluster_label() && mask.count() > 0)
        if (const auto* c = s.cluster(*rev->cluster_label()))
            out["cluster_ratio"] = double(c->point_indices.size()) / double(mask.count());
    return json_response(200, out);
}

Response Service::violins(Session& s, const Request& r) {
    auto rev = require_brush(s, r);
    const ScaleMode mode = scale_mode_from_string(query(r, "scale").value_or("global"));
    const auto& ens = s.ensemble();
    std::vector<SelectionMask> masks;
    for (std::size_t i = 0; i < ens.active.size(); ++i) masks.push_back(rev->mask(ens, i));
    const auto layouts = layout(ens.active, masks, ens.manifest.representative_index(), mode);
    json arr = json::array();
    for (const auto& l : layouts) arr.push_back(to_json(l));
    return json_response(200,
                         {{"session", s.id()}, {"revision", rev->number()}, {"scale", to_string(mode)}, {"layouts", arr}});
}

Response Service::mesh(Session& s, const Request& r, const std::string& member) {
    auto rev = require_brush(s, r);
    const auto idx = s.ensemble().manifest.member_index(member);
    MeshOptions opt{double_param(r, "smooth", kDefaultSmoothingSigma), double_param(r, "iso", kDefaultIso)};
    if (opt.sigma < 0.0) throw HttpError{422, "smooth must be >= 0"};
    const auto raw = s.raw_member(idx);
    const auto surf = member_surface(s.ensemble().manifest, *raw, s.ensemble().active[idx], rev->mask(s.ensemble(), idx),
                                     rev->brush(), opt);
    return json_response(200, {{"session", s.id()}, {"revision", rev->number()}, {"mesh", to_json(surf.mesh)}});
}

Response Service::mesh_compare(Session& s, const Request& r) {
    auto rev = require_brush(s, r);
    const auto a = query(r, "a"), b = query(r, "b");
    if (!a || !b) throw HttpError{422, "a and b are required"};
    const auto& ens = s.ensemble();
    const auto ia = ens.manifest.member_index(*a), ib = ens.manifest.member_index(*b);
    MeshOptions opt{double_param(r, "smooth", kDefaultSmoothingSigma), double_param(r, "iso", kDefaultIso)};
    if (opt.sigma < 0.0) throw HttpError{422, "smooth must be >= 0"};
    auto sa = member_surface(ens.manifest, *s.raw_member(ia), ens.active[ia], rev->mask(ens, ia), rev->brush(), opt);
    auto sb = member_surface(ens.manifest, *s.raw_member(ib), ens.active[ib], rev->mask(ens, ib), rev->brush(), opt);
    const auto payload = comparison_payload(std::move(sa.mesh), sa.selection, std::move(sb.mesh), sb.selection);
    return json_response(200, {{"session", s.id()},
                               {"revision", rev->number()},
                               {"a", to_json(payload.a)},
                               {"b", to_json(payload.b)},
                               {"overlap", to_json(payload.overlap)}});
}

}  // namespace enslens
