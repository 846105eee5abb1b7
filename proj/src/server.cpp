#include "confslate/server.hpp"

#include <deque>
#include <optional>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

#include "confslate/error.hpp"

namespace confslate::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

constexpr auto kTickerPeriod = std::chrono::milliseconds(50);
constexpr std::size_t kMaxBody = 1 << 20;

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response make_response(const Request& req, http::status status, std::string body,
                       std::string_view content_type = "application/json") {
  Response res{status, req.version()};
  res.set(http::field::server, "confslate");
  res.set(http::field::content_type, beast::string_view(content_type.data(), content_type.size()));
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response error_response(const Request& req, ErrorCode code, std::string_view message) {
  return make_response(req, static_cast<http::status>(http_status(code)), error_message(code, message).dump());
}

std::vector<std::string> split_path(std::string_view target) {
  if (const auto q = target.find('?'); q != std::string_view::npos) {
    target = target.substr(0, q);
  }
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < target.size()) {
    if (target[i] == '/') {
      ++i;
      continue;
    }
    const auto j = target.find('/', i);
    parts.emplace_back(target.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i));
    if (j == std::string_view::npos) break;
    i = j;
  }
  return parts;
}

json parse_body(const Request& req) {
  if (req.body().empty()) {
    return json::object();
  }
  try {
    return json::parse(req.body());
  } catch (const json::exception&) {
    throw Error(ErrorCode::SchemaError, "request body is not valid JSON");
  }
}

Response route(SessionManager& manager, const Request& req) {
  const auto parts = split_path(std::string_view(req.target().data(), req.target().size()));
  const auto method = req.method();
  try {
    if (method == http::verb::options) {
      auto res = make_response(req, http::status::no_content, "");
      res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
      res.set(http::field::access_control_allow_headers, "Content-Type");
      return res;
    }
    if (parts.empty() || parts[0] != "sessions" || parts.size() > 3) {
      throw Error(ErrorCode::NotFound, fmt::format("no route for {}", std::string(req.target().data(), req.target().size())));
    }
    if (parts.size() == 1) {
      if (method != http::verb::post) {
        return make_response(req, http::status::method_not_allowed,
                             error_message(ErrorCode::ValidationError, "use POST").dump());
      }
      return make_response(req, http::status::created, manager.create_session(parse_body(req)).dump());
    }
    const auto& id = parts[1];
    if (parts.size() == 2 && method == http::verb::get) {
      return make_response(req, http::status::ok, manager.status(id).dump());
    }
    if (parts.size() == 3 && parts[2] == "inference" && method == http::verb::post) {
      return make_response(req, http::status::ok, manager.submit_inference(id, parse_body(req)).dump());
    }
    if (parts.size() == 3 && parts[2] == "records" && method == http::verb::get) {
      return make_response(req, http::status::ok, manager.records_csv(id), "text/csv");
    }
    if (parts.size() == 3 && parts[2] == "stream" && method == http::verb::get) {
      manager.status(id);  // 404 for unknown sessions
      return make_response(req, http::status::upgrade_required,
                           error_message(ErrorCode::ValidationError, "stream requires a WebSocket upgrade").dump());
    }
    throw Error(ErrorCode::NotFound, fmt::format("no route for {} {}", std::string(req.method_string().data(), req.method_string().size()),
                                                 std::string(req.target().data(), req.target().size())));
  } catch (const Error& e) {
    return error_response(req, e.code(), e.what());
  } catch (const std::exception& e) {
    return make_response(req, http::status::internal_server_error,
                         error_message(ErrorCode::IoError, e.what()).dump());
  }
}

class StreamSession : public std::enable_shared_from_this<StreamSession> {
 public:
  StreamSession(tcp::socket&& socket, SessionManager& manager, std::string id)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), manager_(manager), id_(std::move(id)) {}

  ~StreamSession() {
    try {
      manager_.detach_stream(id_);
    } catch (...) {
    }
  }

  void accept(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&StreamSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return close();
    ws_.text(true);
    read();
    tick();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&StreamSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return close();
    const auto text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      for (auto& m : manager_.on_stream_message(id_, text)) send(m.dump());
    } catch (const Error& e) {
      send(error_message(e.code(), e.what()).dump());
    }
    read();
  }

  void tick() {
    if (closed_) return;
    try {
      for (auto& m : manager_.poll(id_)) send(m.dump());
    } catch (const Error& e) {
      send(error_message(e.code(), e.what()).dump());
    }
    timer_.expires_after(kTickerPeriod);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->tick();
    });
  }

  void send(std::string text) {
    if (closed_) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

  void write() {
    ws_.async_write(net::buffer(queue_.front()), beast::bind_front_handler(&StreamSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return close();
    queue_.pop_front();
    if (!queue_.empty()) write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    queue_.clear();
    try {
      manager_.detach_stream(id_);
    } catch (...) {
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  SessionManager& manager_;
  std::string id_;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, SessionManager& manager) : stream_(std::move(socket)), manager_(manager) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::read, shared_from_this()));
  }

 private:
  void read() {
    parser_.emplace();
    parser_->body_limit(kMaxBody);
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return shutdown();
    if (ec) return;
    Request req = parser_->release();

    if (websocket::is_upgrade(req)) {
      const auto parts = split_path(std::string_view(req.target().data(), req.target().size()));
      if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "stream") {
        try {
          manager_.attach_stream(parts[1]);
        } catch (const Error& e) {
          return respond(error_response(req, e.code(), e.what()));
        }
        stream_.expires_never();
        std::make_shared<StreamSession>(stream_.release_socket(), manager_, parts[1])->accept(std::move(req));
        return;
      }
      return respond(error_response(req, ErrorCode::NotFound, "no stream at this path"));
    }
    respond(route(manager_, req));
  }

  void respond(Response res) {
    auto shared = std::make_shared<Response>(std::move(res));
    const bool keep = shared->keep_alive();
    http::async_write(stream_, *shared,
                      [self = shared_from_this(), shared, keep](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!keep) return self->shutdown();
                        self->read();
                      });
  }

  void shutdown() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
  SessionManager& manager_;
};

}  // namespace

struct Server::Impl {
  SessionManager& manager;
  int threads;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::vector<std::thread> workers;

  Impl(SessionManager& m, const std::string& host, unsigned short port, int n)
      : manager(m), threads(std::max(1, n)), ioc(threads), acceptor(net::make_strand(ioc)) {
    beast::error_code ec;
    const auto address = net::ip::make_address(host, ec);
    if (ec) {
      throw Error(ErrorCode::ValidationError, fmt::format("bad listen address \"{}\"", host));
    }
    const tcp::endpoint endpoint{address, port};
    acceptor.open(endpoint.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(endpoint, ec);
    if (ec) {
      throw Error(ErrorCode::IoError, fmt::format("cannot bind {}:{}: {}", host, port, ec.message()));
    }
    acceptor.listen(net::socket_base::max_listen_connections);
    accept();
  }

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), manager)->run();
      accept();
    });
  }
};

Server::Server(SessionManager& manager, const std::string& host, unsigned short port, int threads)
    : impl_(std::make_unique<Impl>(manager, host, port, threads)) {}

Server::~Server() {
  stop();
}

unsigned short Server::port() const noexcept {
  return impl_->acceptor.local_endpoint().port();
}

void Server::start() {
  for (int i = 0; i < impl_->threads; ++i) {
    impl_->workers.emplace_back([this] { impl_->ioc.run(); });
  }
}

void Server::run() {
  for (int i = 1; i < impl_->threads; ++i) {
    impl_->workers.emplace_back([this] { impl_->ioc.run(); });
  }
  impl_->ioc.run();
}

void Server::stop() {
  if (!impl_) return;
  impl_->ioc.stop();
  for (auto& t : impl_->workers) {
    if (t.joinable() && t.get_id() != std::this_thread::get_id()) t.join();
  }
  impl_->workers.clear();
}

std::pair<std::string, unsigned short> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size()) {
    throw Error(ErrorCode::ValidationError, fmt::format("address must be host:port, got \"{}\"", addr));
  }
  try {
    std::size_t used = 0;
    const int port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1 || port < 0 || port > 65535) throw std::out_of_range("port");
    return {addr.substr(0, colon), static_cast<unsigned short>(port)};
  } catch (const std::exception&) {
    throw Error(ErrorCode::ValidationError, fmt::format("bad port in \"{}\"", addr));
  }
}

}  // namespace confslate::service
