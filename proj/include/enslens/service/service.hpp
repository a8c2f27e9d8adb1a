#pragma once

// Session API. Request handling is transport-free so it can be driven
// directly in tests; server.hpp puts it on HTTP and WebSocket.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "enslens/core/ensemble.hpp"
#include "enslens/pipeline/pipeline.hpp"

namespace enslens {

struct Request {
    std::string method;  // "GET", "POST", ...
    std::string path;    // without query
    std::map<std::string, std::string> query;
    std::string body;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

// Splits "a/b?x=1&y=%20" into path and decoded query pairs.
Request parse_target(std::string method, std::string_view target, std::string body = {});

// One brush revision. Masks are filled lazily and are immutable once set.
class Revision {
public:
    Revision(std::uint64_t number, Provenance provenance, std::optional<std::string> cluster_label, HyperBox base_box,
             MultiParameterBrush brush, std::size_t member_count);

    std::uint64_t number() const { return number_; }
    Provenance provenance() const { return provenance_; }
    const std::optional<std::string>& cluster_label() const { return cluster_label_; }
    const HyperBox& base_box() const { return base_box_; }
    const MultiParameterBrush& brush() const { return brush_; }

    const SelectionMask& mask(const Ensemble& ensemble, std::size_t member) const;

private:
    std::uint64_t number_;
    Provenance provenance_;
    std::optional<std::string> cluster_label_;
    HyperBox base_box_;
    MultiParameterBrush brush_;
    mutable std::mutex mu_;
    mutable std::vector<std::optional<SelectionMask>> masks_;
};

class Session {
public:
    using Listener = std::function<void(const std::string& event)>;

    Session(std::string id, std::shared_ptr<const Ensemble> ensemble, std::vector<ClusterSelection> clusters);

    const std::string& id() const { return id_; }
    const Ensemble& ensemble() const { return *ensemble_; }
    const std::vector<ClusterSelection>& clusters() const { return clusters_; }
    // Null before the first brush.
    std::shared_ptr<const Revision> current() const;

    // Mutations are serialized; the returned revision is the one they produced.
    std::shared_ptr<const Revision> set_cluster(const std::string& label);
    std::shared_ptr<const Revision> set_box(const HyperBox& box);
    std::shared_ptr<const Revision> edit(std::size_t parameter, double lo, double hi);
    std::shared_ptr<const Revision> refine(BrushMode mode, std::size_t passes);

    // Sends the current state (if any) then every later event, in mutation order.
    std::uint64_t subscribe(Listener listener);
    void unsubscribe(std::uint64_t token);

    const ClusterSelection* cluster(const std::string& label) const;
    std::shared_ptr<const MemberField> raw_member(std::size_t member) const;
    std::string event_json(const Revision& rev) const;
    std::vector<CountRow> counts(const Revision& rev) const;

private:
    std::shared_ptr<const Revision> commit(Provenance p, std::optional<std::string> label, HyperBox base,
                                           MultiParameterBrush brush);

    std::string id_;
    std::shared_ptr<const Ensemble> ensemble_;
    std::vector<ClusterSelection> clusters_;

    std::mutex write_mu_;
    mutable std::mutex snap_mu_;
    std::shared_ptr<const Revision> current_;
    std::uint64_t next_revision_ = 1;

    std::map<std::uint64_t, Listener> listeners_;  // guarded by write_mu_
    std::uint64_t next_token_ = 1;

    mutable std::mutex raw_mu_;
    mutable std::vector<std::shared_ptr<const MemberField>> raw_;
};

struct ServiceOptions {
    std::filesystem::path data_root = ".";
};

class Service {
public:
    explicit Service(ServiceOptions options);

    Response handle(const Request& request);

    // Null when unknown; an empty id means the most recently created session.
    std::shared_ptr<Session> session(const std::string& id) const;

private:
    Response load_ensemble(const Request& r);
    Response brush(Session& s, const Request& r);
    Response refine(Session& s, const Request& r);
    Response counts(Session& s, const Request& r);
    Response pcp(Session& s, const Request& r, const std::string& member);
    Response histograms(Session& s, const Request& r, const std::string& member);
    Response violins(Session& s, const Request& r);
    Response mesh(Session& s, const Request& r, const std::string& member);
    Response mesh_compare(Session& s, const Request& r);

    std::filesystem::path resolve(const std::string& rel) const;

    ServiceOptions options_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::string latest_;
    std::uint64_t next_session_ = 1;
};

}  // namespace enslens
