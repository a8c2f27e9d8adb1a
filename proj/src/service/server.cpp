#include "enslens/service/server.hpp"

#include <condition_variable>
#include <deque>
#include <fstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "enslens/error.hpp"
#include "enslens/util/parallel.hpp"

namespace enslens {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

ServerConfig load_server_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "config not found: " + path.string());
    ServerConfig cfg;
    try {
        const auto doc = nlohmann::json::parse(in);
        if (!doc.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");
        for (const auto& [key, value] : doc.items()) {
            if (key == "address")
                cfg.address = value.get<std::string>();
            else if (key == "port")
                cfg.port = value.get<std::uint16_t>();
            else if (key == "data_root")
                cfg.data_root = value.get<std::string>();
            else if (key == "threads")
                cfg.threads = value.get<std::size_t>();
            else
                throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, e.what());
    }
    return cfg;
}

namespace {

void add_cors(http::response<http::string_body>& res) {
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
}

http::response<http::string_body> simple_response(unsigned version, bool keep_alive, const Response& r) {
    http::response<http::string_body> res{static_cast<http::status>(r.status), version};
    res.set(http::field::server, "enslens");
    res.set(http::field::content_type, r.content_type);
    add_cors(res);
    res.keep_alive(keep_alive);
    res.body() = r.body;
    res.prepare_payload();
    return res;
}

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket socket, std::shared_ptr<Session> session)
        : ws_(std::move(socket)), session_(std::move(session)) {}

    ~WsSession() {
        if (token_) session_->unsubscribe(token_);
    }

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        std::weak_ptr<WsSession> weak = shared_from_this();
        token_ = session_->subscribe([weak](const std::string& event) {
            if (auto self = weak.lock()) self->send(event);
        });
        read();
    }

    void read() {
        ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            if (token_) session_->unsubscribe(token_);
            token_ = 0;
            return;
        }
        buffer_.consume(buffer_.size());  // client messages are ignored
        read();
    }

    void send(const std::string& event) {
        asio::post(ws_.get_executor(), [self = shared_from_this(), event] {
            self->queue_.push_back(event);
            if (self->queue_.size() == 1) self->write();
        });
    }

    void write() {
        ws_.text(true);
        ws_.async_write(asio::buffer(queue_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (ec) return;
        queue_.pop_front();
        if (!queue_.empty()) write();
    }

    websocket::stream<beast::tcp_stream> ws_;
    std::shared_ptr<Session> session_;
    beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    std::uint64_t token_ = 0;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket socket, Service& service) : stream_(std::move(socket)), service_(service) {}

    void run() {
        asio::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::read, shared_from_this()));
    }

private:
    void read() {
        parser_.emplace();
        parser_->body_limit(64 * 1024 * 1024);
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            beast::error_code ignored;
            stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
            return;
        }
        auto req = parser_->release();
        if (websocket::is_upgrade(req)) {
            const auto target = parse_target("GET", std::string_view(req.target().data(), req.target().size()));
            auto it = target.query.find("session");
            auto s = service_.session(it == target.query.end() ? "" : it->second);
            if (target.path == "/events" && s) {
                stream_.expires_never();
                std::make_shared<WsSession>(stream_.release_socket(), std::move(s))->run(std::move(req));
                return;
            }
            Response r{404, R"({"error":"NotFound","message":"unknown session or WebSocket route"})"};
            send(simple_response(req.version(), false, r));
            return;
        }
        const std::string method(req.method_string());
        Response r =
            service_.handle(parse_target(method, std::string_view(req.target().data(), req.target().size()), req.body()));
        send(simple_response(req.version(), req.keep_alive(), r));
    }

    void send(http::response<http::string_body> res) {
        auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
        http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (sp->need_eof()) {
                beast::error_code ignored;
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                return;
            }
            self->read();
        });
    }

    beast::tcp_stream stream_;
    Service& service_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Server::Impl {
    explicit Impl(ServerConfig c) : config(std::move(c)), service(ServiceOptions{config.data_root}) {}

    void accept() {
        acceptor->async_accept(asio::make_strand(io), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<HttpSession>(std::move(socket), service)->run();
            accept();
        });
    }

    ServerConfig config;
    Service service;
    asio::io_context io;
    std::optional<tcp::acceptor> acceptor;
    std::vector<std::thread> threads;
    std::mutex mu;
    std::condition_variable cv;
    bool stopped = false;
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() { stop(); }

Service& Server::service() { return impl_->service; }

void Server::start() {
    auto& m = *impl_;
    if (m.config.threads > 0) set_thread_count(m.config.threads);
    const tcp::endpoint ep(asio::ip::make_address(m.config.address), m.config.port);
    m.acceptor.emplace(m.io);
    m.acceptor->open(ep.protocol());
    m.acceptor->set_option(asio::socket_base::reuse_address(true));
    m.acceptor->bind(ep);
    m.acceptor->listen(asio::socket_base::max_listen_connections);
    m.accept();
    // Requests compute inline, so keep a spare I/O thread for event delivery.
    const std::size_t n = std::max<std::size_t>(2, std::min<std::size_t>(thread_count(), 8));
    for (std::size_t i = 0; i < n; ++i) m.threads.emplace_back([&m] { m.io.run(); });
}

std::uint16_t Server::port() const { return impl_->acceptor ? impl_->acceptor->local_endpoint().port() : 0; }

void Server::stop() {
    auto& m = *impl_;
    {
        std::lock_guard lock(m.mu);
        if (m.stopped) return;
        m.stopped = true;
    }
    m.io.stop();
    for (auto& t : m.threads)
        if (t.joinable()) t.join();
    m.threads.clear();
    m.cv.notify_all();
}

void Server::wait() {
    auto& m = *impl_;
    std::unique_lock lock(m.mu);
    m.cv.wait(lock, [&] { return m.stopped; });
}

}  // namespace enslens
