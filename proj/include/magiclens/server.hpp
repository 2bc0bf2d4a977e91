#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "magiclens/service.hpp"

namespace magiclens {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

inline constexpr unsigned short kDefaultPort = 7878;
inline constexpr const char* kStreamPath = "/stream";

namespace detail {

/// One accepted WebSocket. All socket operations run on the io thread; send() may be
/// called from any thread.
class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    using OnText = std::function<void(std::string)>;
    using OnClose = std::function<void()>;

    WsConnection(tcp::socket socket, OnText on_text, OnClose on_close)
        : ws_(std::move(socket)), on_text_(std::move(on_text)), on_close_(std::move(on_close)) {}

    /// Completes the upgrade; `on_open` runs on the io thread once frames may be sent.
    void start(http::request<http::string_body> req, std::function<void()> on_open) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this(), on_open = std::move(on_open)](beast::error_code ec) {
            if (ec) return self->finish();
            on_open();
            self->read();
        });
    }

    void send_text(std::string text) { post({true, std::vector<std::uint8_t>(text.begin(), text.end())}); }
    void send_binary(std::vector<std::uint8_t> bytes) { post({false, std::move(bytes)}); }

    void close() {
        net::post(ws_.get_executor(), [self = shared_from_this()] {
            beast::error_code ec;
            beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
            beast::get_lowest_layer(self->ws_).socket().close(ec);
        });
    }

private:
    struct Outgoing {
        bool text;
        std::vector<std::uint8_t> data;
    };

    void post(Outgoing msg) {
        net::post(ws_.get_executor(), [self = shared_from_this(), m = std::move(msg)]() mutable {
            self->queue_.push_back(std::move(m));
            if (self->queue_.size() == 1) self->write();
        });
    }

    void write() {
        Outgoing& m = queue_.front();
        ws_.text(m.text);
        ws_.async_write(net::buffer(m.data), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->finish();
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->write();
        });
    }

    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->finish();
            std::string text = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            self->on_text_(std::move(text));
            self->read();
        });
    }

    void finish() {
        if (closed_) return;
        closed_ = true;
        queue_.clear();
        on_close_();
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<Outgoing> queue_;
    OnText on_text_;
    OnClose on_close_;
    bool closed_ = false;
};

}  // namespace detail

/// WebSocket front end for one Session. A network thread accepts connections on `/stream`
/// and forwards text messages into a mailbox; a render worker drains the mailbox, answers
/// each message, and streams frames whenever the state changed and backpressure allows.
/// One client at a time; a new connection replaces the previous one.
class StreamServer {
public:
    StreamServer(Session& session, unsigned short port, const std::string& address = "127.0.0.1")
        : session_(session), acceptor_(ioc_, {net::ip::make_address(address), port}) {}

    ~StreamServer() { stop(); }

    unsigned short port() const { return acceptor_.local_endpoint().port(); }

    void start() {
        accept();
        io_thread_ = std::thread([this] { ioc_.run(); });
        worker_ = std::thread([this] { work(); });
    }

    /// Blocks until stop() is called from another thread or a signal handler.
    void run() {
        start();
        std::unique_lock lock(mu_);
        cv_stopped_.wait(lock, [this] { return stopping_; });
    }

    void stop() {
        {
            std::lock_guard lock(mu_);
            if (stopping_ && !io_thread_.joinable() && !worker_.joinable()) return;
            stopping_ = true;
        }
        cv_.notify_all();
        cv_stopped_.notify_all();
        net::post(ioc_, [this] {
            beast::error_code ec;
            acceptor_.close(ec);
            if (conn_) conn_->close();
        });
        if (worker_.joinable()) worker_.join();
        ioc_.stop();
        if (io_thread_.joinable()) io_thread_.join();
    }

private:
    struct Connected {
        std::shared_ptr<detail::WsConnection> conn;
    };
    struct Text {
        std::shared_ptr<detail::WsConnection> conn;
        std::string body;
    };
    struct Closed {
        std::shared_ptr<detail::WsConnection> conn;
    };
    using Event = std::variant<Connected, Text, Closed>;

    void accept() {
        acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            handshake(std::move(socket));
            accept();
        });
    }

    void handshake(tcp::socket socket) {
        struct Pending {
            beast::tcp_stream stream;
            beast::flat_buffer buffer;
            http::request<http::string_body> req;
        };
        auto p = std::make_shared<Pending>(Pending{beast::tcp_stream(std::move(socket)), {}, {}});
        p->stream.expires_after(std::chrono::seconds(10));
        http::async_read(p->stream, p->buffer, p->req, [this, p](beast::error_code ec, std::size_t) {
            if (ec) return;
            p->stream.expires_never();
            if (!websocket::is_upgrade(p->req) || p->req.target() != kStreamPath) {
                auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, p->req.version());
                res->set(http::field::content_type, "text/plain");
                res->body() = "websocket endpoint is " + std::string(kStreamPath) + "\n";
                res->prepare_payload();
                http::async_write(p->stream, *res, [p, res](beast::error_code, std::size_t) {
                    beast::error_code ignored;
                    p->stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
                });
                return;
            }
            std::shared_ptr<detail::WsConnection> conn;
            auto weak = std::make_shared<std::weak_ptr<detail::WsConnection>>();
            conn = std::make_shared<detail::WsConnection>(
                p->stream.release_socket(),
                [this, weak](std::string text) {
                    if (auto c = weak->lock()) push(Text{c, std::move(text)});
                },
                [this, weak] {
                    if (auto c = weak->lock()) push(Closed{c});
                });
            *weak = conn;
            if (conn_) conn_->close();
            conn_ = conn;
            conn->start(std::move(p->req), [this, conn] { push(Connected{conn}); });
        });
    }

    void push(Event e) {
        {
            std::lock_guard lock(mu_);
            events_.push_back(std::move(e));
        }
        cv_.notify_one();
    }

    void work() {
        std::shared_ptr<detail::WsConnection> client;
        while (true) {
            std::deque<Event> batch;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return stopping_ || !events_.empty(); });
                if (stopping_) return;
                batch.swap(events_);
            }
            for (Event& e : batch) {
                if (auto* c = std::get_if<Connected>(&e)) {
                    client = c->conn;
                    session_.scheduler().reset();
                    session_.mark_dirty();
                } else if (auto* t = std::get_if<Text>(&e)) {
                    if (t->conn != client) continue;
                    nlohmann::json reply;
                    try {
                        reply = session_.handle_message(nlohmann::json::parse(t->body));
                    } catch (const nlohmann::json::parse_error&) {
                        reply = {{"type", "err"}, {"seq", nullptr}, {"reason", "invalid JSON"}};
                    }
                    client->send_text(reply.dump());
                } else if (auto* c = std::get_if<Closed>(&e)) {
                    if (c->conn == client) client.reset();
                }
            }
            if (client && session_.dirty() && session_.scheduler().can_send()) {
                try {
                    FramePacket p = session_.stream_frame();
                    session_.scheduler().on_sent(p.frame_id);
                    client->send_binary(std::move(p.bytes));
                    client->send_text(p.stats.dump());
                } catch (const std::exception& e) {
                    // retried after the next client message
                    client->send_text(nlohmann::json{{"type", "err"}, {"seq", nullptr}, {"reason", e.what()}}.dump());
                }
            }
        }
    }

    Session& session_;
    net::io_context ioc_;
    tcp::acceptor acceptor_;
    std::shared_ptr<detail::WsConnection> conn_;  // io thread only

    std::mutex mu_;
    std::condition_variable cv_, cv_stopped_;
    std::deque<Event> events_;
    bool stopping_ = false;

    std::thread io_thread_, worker_;
};

}  // namespace magiclens
