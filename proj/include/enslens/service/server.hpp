#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "enslens/service/service.hpp"

namespace enslens {

struct ServerConfig {
    std::string address = "127.0.0.1";
    std::uint16_t port = 8080;  // 0 picks a free port
    std::filesystem::path data_root = ".";
    std::size_t threads = 0;  // engine threads; 0 keeps the current setting
};

// Reads {"address", "port", "data_root", "threads"}; missing keys keep defaults.
// Throws ConfigInvalid or MissingFile.
ServerConfig load_server_config(const std::filesystem::path& path);

// HTTP routes from Service plus WebSocket /events?session=ID on the same port.
class Server {
public:
    explicit Server(ServerConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts the I/O threads; returns once listening.
    void start();
    std::uint16_t port() const;
    void stop();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();

    Service& service();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace enslens
