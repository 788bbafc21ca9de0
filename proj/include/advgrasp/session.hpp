#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "advgrasp/adversary.hpp"
#include "advgrasp/config.hpp"
#include "advgrasp/error.hpp"
#include "advgrasp/imaging.hpp"
#include "advgrasp/physics.hpp"
#include "advgrasp/trainer.hpp"

namespace advgrasp {

namespace wire {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::string_view kWebSocketGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

// "host:port"; an empty host or "*" listens on every interface.
inline Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw Error(ErrorCode::BIND_FAILURE, "expected host:port, got '" + std::string(text) + "'");
  Endpoint e;
  e.host = std::string(text.substr(0, colon));
  if (e.host == "*") e.host.clear();
  const std::string port(text.substr(colon + 1));
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5 || std::stoi(port) > 65535)
    throw Error(ErrorCode::BIND_FAILURE, "bad port '" + port + "'");
  e.port = static_cast<std::uint16_t>(std::stoi(port));
  return e;
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

// Waits up to timeout_ms (negative blocks) for fd to become readable.
inline bool wait_readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&p, 1, timeout_ms);
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw Error(ErrorCode::IO, std::string("poll: ") + std::strerror(errno));
    return r > 0;
  }
}

inline void send_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::CHANNEL_CLOSED, "send failed");
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Appends whatever is available; false once the peer has closed.
inline bool recv_some(int fd, std::string& buffer) {
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
    return true;
  }
}

class Listener {
 public:
  explicit Listener(std::string_view bind) {
    const Endpoint e = parse_endpoint(bind);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(e.port);
    if (const int rc = ::getaddrinfo(e.host.empty() ? nullptr : e.host.c_str(), port.c_str(), &hints, &res); rc != 0)
      throw Error(ErrorCode::BIND_FAILURE, std::string(bind) + ": " + ::gai_strerror(rc));
    std::string last_error = "no usable address";
    for (addrinfo* a = res; a; a = a->ai_next) {
      Socket s(::socket(a->ai_family, a->ai_socktype, a->ai_protocol));
      if (!s.valid()) continue;
      const int one = 1;
      ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(s.fd(), a->ai_addr, a->ai_addrlen) == 0 && ::listen(s.fd(), 4) == 0) {
        sock_ = std::move(s);
        break;
      }
      last_error = std::strerror(errno);
    }
    ::freeaddrinfo(res);
    if (!sock_.valid()) throw Error(ErrorCode::BIND_FAILURE, std::string(bind) + ": " + last_error);
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  std::uint16_t port() const { return port_; }
  int fd() const { return sock_.fd(); }

  std::optional<Socket> accept(int timeout_ms) {
    if (!wait_readable(sock_.fd(), timeout_ms)) return std::nullopt;
    const int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) return std::nullopt;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(fd);
  }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

inline std::string websocket_accept_key(std::string_view client_key) {
  const std::string input = std::string(client_key) + std::string(kWebSocketGuid);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha1(), nullptr);
  return base64_encode(std::string_view(reinterpret_cast<const char*>(digest), len));
}

enum class Opcode : std::uint8_t { CONTINUATION = 0x0, TEXT = 0x1, BINARY = 0x2, CLOSE = 0x8, PING = 0x9, PONG = 0xA };

inline std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::uint32_t> mask = std::nullopt) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::uint64_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xffff) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n & 0xff));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xff));
  }
  if (!mask) return out.append(payload);
  const std::uint8_t key[4] = {static_cast<std::uint8_t>(*mask >> 24), static_cast<std::uint8_t>(*mask >> 16),
                               static_cast<std::uint8_t>(*mask >> 8), static_cast<std::uint8_t>(*mask)};
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < payload.size(); ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

struct Frame {
  bool fin = true;
  Opcode opcode = Opcode::TEXT;
  std::string payload;
};

// Removes one complete frame from the front of buffer, if there is one.
inline std::optional<Frame> decode_frame(std::string& buffer) {
  if (buffer.size() < 2) return std::nullopt;
  const auto b = [&](std::size_t i) { return static_cast<std::uint8_t>(buffer[i]); };
  Frame f;
  f.fin = (b(0) & 0x80) != 0;
  f.opcode = static_cast<Opcode>(b(0) & 0x0f);
  const bool masked = (b(1) & 0x80) != 0;
  std::uint64_t n = b(1) & 0x7f;
  std::size_t pos = 2;
  if (n == 126) {
    if (buffer.size() < 4) return std::nullopt;
    n = (std::uint64_t{b(2)} << 8) | b(3);
    pos = 4;
  } else if (n == 127) {
    if (buffer.size() < 10) return std::nullopt;
    n = 0;
    for (std::size_t i = 2; i < 10; ++i) n = (n << 8) | b(i);
    pos = 10;
  }
  if (n > (std::uint64_t{1} << 26)) throw Error(ErrorCode::PARSE, "websocket frame too large");
  const std::size_t key_pos = pos;
  if (masked) pos += 4;
  if (buffer.size() < pos + n) return std::nullopt;
  f.payload = buffer.substr(pos, static_cast<std::size_t>(n));
  if (masked) {
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<char>(f.payload[i] ^ buffer[key_pos + i % 4]);
  }
  buffer.erase(0, pos + static_cast<std::size_t>(n));
  return f;
}

inline std::string header_value(std::string_view request, std::string_view name) {
  std::istringstream in{std::string(request)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto colon = line.find(':');
    if (colon == std::string::npos || colon != name.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < colon; ++i) {
      if (std::tolower(static_cast<unsigned char>(line[i])) != std::tolower(static_cast<unsigned char>(name[i]))) same = false;
    }
    if (!same) continue;
    std::string v = line.substr(colon + 1);
    const auto first = v.find_first_not_of(" \t");
    return first == std::string::npos ? std::string() : v.substr(first, v.find_last_not_of(" \t") - first + 1);
  }
  return {};
}

enum class Transport : std::uint8_t { RAW, WEBSOCKET };

// One peer speaking newline-delimited JSON, either directly or inside
// websocket text frames. Each frame may carry one or more lines.
class Connection {
 public:
  Connection(Socket sock, Transport transport, std::string pending = {}, bool client_side = false)
      : sock_(std::move(sock)), transport_(transport), raw_(std::move(pending)), client_side_(client_side) {}

  // Server side: sniffs the first bytes and answers a websocket upgrade.
  static Connection accept_peer(Socket sock, int sniff_ms = 250) {
    std::string buffer;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(sniff_ms);
    while (buffer.size() < 4 || (buffer.rfind("GET ", 0) == 0 && buffer.find("\r\n\r\n") == std::string::npos)) {
      if (buffer.size() >= 4 && buffer.rfind("GET ", 0) != 0) break;
      if (buffer.size() > 16384) throw Error(ErrorCode::PARSE, "oversized handshake");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      const bool upgrading = buffer.rfind("GET ", 0) == 0;
      if (!upgrading && left.count() <= 0) break;
      if (!wait_readable(sock.fd(), upgrading ? 5000 : static_cast<int>(left.count()))) {
        if (upgrading) throw Error(ErrorCode::TIMEOUT, "incomplete websocket handshake");
        break;
      }
      if (!recv_some(sock.fd(), buffer)) throw Error(ErrorCode::CHANNEL_CLOSED, "peer closed during handshake");
    }
    if (buffer.rfind("GET ", 0) != 0) return Connection(std::move(sock), Transport::RAW, std::move(buffer));

    const auto end = buffer.find("\r\n\r\n");
    const std::string request = buffer.substr(0, end);
    std::string rest = buffer.substr(end + 4);
    const std::string key = header_value(request, "Sec-WebSocket-Key");
    if (key.empty()) {
      send_all(sock.fd(), "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
      throw Error(ErrorCode::PARSE, "http request without websocket upgrade");
    }
    send_all(sock.fd(), "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                        "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n");
    return Connection(std::move(sock), Transport::WEBSOCKET, std::move(rest));
  }

  // Client side, used by scripted adversaries and tests.
  static Connection connect(const std::string& host, std::uint16_t port, Transport transport, int timeout_ms = 5000) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
      throw Error(ErrorCode::IO, "cannot resolve " + host);
    Socket sock(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    const int rc = sock.valid() ? ::connect(sock.fd(), res->ai_addr, res->ai_addrlen) : -1;
    ::freeaddrinfo(res);
    if (rc != 0) throw Error(ErrorCode::IO, "cannot connect to " + host + ":" + std::to_string(port));
    const int one = 1;
    ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (transport == Transport::RAW) return Connection(std::move(sock), Transport::RAW, {}, true);

    const std::string key = base64_encode("advgrasp-client!");
    send_all(sock.fd(), "GET / HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                            "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                            "\r\nSec-WebSocket-Version: 13\r\n\r\n");
    std::string buffer;
    while (buffer.find("\r\n\r\n") == std::string::npos) {
      if (!wait_readable(sock.fd(), timeout_ms)) throw Error(ErrorCode::TIMEOUT, "no handshake response");
      if (!recv_some(sock.fd(), buffer)) throw Error(ErrorCode::CHANNEL_CLOSED, "closed during handshake");
    }
    const auto end = buffer.find("\r\n\r\n");
    const std::string response = buffer.substr(0, end);
    if (response.rfind("HTTP/1.1 101", 0) != 0 || header_value(response, "Sec-WebSocket-Accept") != websocket_accept_key(key))
      throw Error(ErrorCode::PARSE, "bad websocket handshake response");
    return Connection(std::move(sock), Transport::WEBSOCKET, buffer.substr(end + 4), true);
  }

  Transport transport() const { return transport_; }
  bool open() const { return sock_.valid(); }
  int fd() const { return sock_.fd(); }

  void send(const nlohmann::json& msg) {
    if (!open()) throw Error(ErrorCode::CHANNEL_CLOSED, "connection closed");
    const std::string text = msg.dump();
    try {
      if (transport_ == Transport::RAW) {
        send_all(sock_.fd(), text + "\n");
      } else {
        send_all(sock_.fd(), encode_frame(Opcode::TEXT, text, mask()));
      }
    } catch (const Error&) {
      sock_.reset();
      throw;
    }
  }

  // Sends raw text as one line (or one frame), for malformed-input tests.
  void send_text(std::string_view text) {
    if (transport_ == Transport::RAW) {
      send_all(sock_.fd(), std::string(text) + "\n");
    } else {
      send_all(sock_.fd(), encode_frame(Opcode::TEXT, text, mask()));
    }
  }

  // Next complete line. Empty optional on timeout; throws CHANNEL_CLOSED when the peer is gone.
  std::optional<std::string> receive_line(int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
      if (auto line = pop_line()) return line;
      if (!open()) throw Error(ErrorCode::CHANNEL_CLOSED, "connection closed");
      int wait = -1;
      if (timeout_ms >= 0) {
        wait = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count());
        if (wait < 0) wait = 0;
      }
      if (!wait_readable(sock_.fd(), wait)) return std::nullopt;
      std::string& target = transport_ == Transport::RAW ? text_ : raw_;
      if (!recv_some(sock_.fd(), target)) {
        sock_.reset();
        if (auto line = pop_line()) return line;
        throw Error(ErrorCode::CHANNEL_CLOSED, "peer disconnected");
      }
    }
  }

  // Next message as JSON; malformed lines throw PARSE.
  std::optional<nlohmann::json> receive(int timeout_ms) {
    auto line = receive_line(timeout_ms);
    if (!line) return std::nullopt;
    try {
      return nlohmann::json::parse(*line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::PARSE, std::string("bad message: ") + e.what());
    }
  }

  void close() {
    if (open() && transport_ == Transport::WEBSOCKET) {
      try {
        send_all(sock_.fd(), encode_frame(Opcode::CLOSE, "", mask()));
      } catch (const Error&) {
      }
    }
    sock_.reset();
  }

 private:
  std::optional<std::uint32_t> mask() { return client_side_ ? std::optional<std::uint32_t>(mask_counter_++ * 2654435761u) : std::nullopt; }

  std::optional<std::string> pop_line() {
    if (transport_ == Transport::RAW && text_.empty() && !raw_.empty()) text_ = std::exchange(raw_, {});
    if (transport_ == Transport::WEBSOCKET) drain_frames();
    for (;;) {
      const auto nl = text_.find('\n');
      if (nl == std::string::npos) return std::nullopt;
      std::string line = text_.substr(0, nl);
      text_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return line;
    }
  }

  void drain_frames() {
    while (auto f = decode_frame(raw_)) {
      switch (f->opcode) {
        case Opcode::TEXT:
        case Opcode::BINARY:
          fragment_ = std::move(f->payload);
          break;
        case Opcode::CONTINUATION:
          fragment_ += f->payload;
          break;
        case Opcode::PING:
          send_all(sock_.fd(), encode_frame(Opcode::PONG, f->payload, mask()));
          continue;
        case Opcode::PONG:
          continue;
        case Opcode::CLOSE:
          if (open()) {
            try {
              send_all(sock_.fd(), encode_frame(Opcode::CLOSE, "", mask()));
            } catch (const Error&) {
            }
          }
          sock_.reset();
          raw_.clear();
          return;
        default:
          throw Error(ErrorCode::PARSE, "unknown websocket opcode");
      }
      if (f->fin) {
        text_ += fragment_;
        text_ += '\n';
        fragment_.clear();
      }
    }
  }

  Socket sock_;
  Transport transport_;
  std::string raw_;
  std::string text_;
  std::string fragment_;
  bool client_side_ = false;
  std::uint32_t mask_counter_ = 1;
};

}  // namespace wire

enum class SessionPhase : std::uint8_t { WARMUP, TRAINING, WAITING_FOR_HUMAN, EVAL, DONE };

inline std::string_view to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::WARMUP: return "WARMUP";
    case SessionPhase::TRAINING: return "TRAINING";
    case SessionPhase::WAITING_FOR_HUMAN: return "WAITING_FOR_HUMAN";
    case SessionPhase::EVAL: return "EVAL";
    case SessionPhase::DONE: return "DONE";
  }
  return "?";
}

struct SessionState {
  SessionPhase phase = SessionPhase::WARMUP;
  std::uint64_t episode_id = 0;
  std::size_t episodes_done = 0;
  std::size_t snatches = 0;
  std::size_t withstands = 0;
  std::size_t timeouts = 0;
  std::optional<std::uint64_t> pending_request_id;
};

inline nlohmann::json direction_list() {
  nlohmann::json d = nlohmann::json::array();
  for (Direction dir : kAllDirections) d.push_back(to_string(dir));
  return d;
}

inline nlohmann::json error_message(std::string_view code, std::string_view message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

inline nlohmann::json state_update_message(std::uint64_t episode_id, SessionPhase phase, const Image& img,
                                           const GraspState& state, const GripperConfig& gripper) {
  const Vec2 half = (0.5 * gripper.jaw_open_width) * state.grasp.axis();
  const Vec2 a = world_to_pixel_coords(img, state.grasp.center() - half);
  const Vec2 b = world_to_pixel_coords(img, state.grasp.center() + half);
  nlohmann::json contacts = nlohmann::json::array();
  if (state.contacts) {
    for (const Contact& c : {state.contacts->first, state.contacts->second}) {
      const Vec2 p = world_to_pixel_coords(img, c.point);
      contacts.push_back({p.x, p.y});
    }
  }
  return {{"type", "state_update"},
          {"episode_id", episode_id},
          {"phase", to_string(phase)},
          {"image", {{"w", img.width}, {"h", img.height}, {"b64", base64_encode(encode_pgm(img))}}},
          {"grasp", {{"x", state.grasp.x}, {"y", state.grasp.y}, {"theta", state.grasp.theta}}},
          {"grasp_success", state.success},
          {"overlay", {{"bar", {{a.x, a.y}, {b.x, b.y}}}, {"contacts", std::move(contacts)}}}};
}

struct SessionSummary {
  std::size_t episodes = 0;
  std::size_t snatches = 0;
  std::size_t withstands = 0;
  std::size_t timeouts = 0;
  std::size_t checkpoints = 0;
  std::size_t selected_checkpoint = 0;
  double eval_pre_rate = 0.0;
  double eval_post_rate = 0.0;
  std::string log_path;
};

inline nlohmann::json to_json(const SessionSummary& s) {
  return {{"episodes", s.episodes},
          {"snatches", s.snatches},
          {"withstands", s.withstands},
          {"timeouts", s.timeouts},
          {"checkpoints", s.checkpoints},
          {"selected_checkpoint", s.selected_checkpoint},
          {"eval", {{"pre_rate", s.eval_pre_rate}, {"post_rate", s.eval_post_rate}}},
          {"log", s.log_path}};
}

// Hosts one human-adversary training session for a single controlling client.
// All events run on the calling thread; the socket is polled only at hook points
// and while waiting for a human action.
class SessionServer : public HumanChannel {
 public:
  SessionServer(RunConfig cfg, std::string_view bind) : cfg_(std::move(cfg)), listener_(bind) {
    if (cfg_.train.adversary != AdversaryKind::HUMAN)
      throw Error(ErrorCode::INVALID_CONFIG, "serve needs the human adversary");
    validate(cfg_);
  }

  std::uint16_t port() const { return listener_.port(); }

  // Makes a blocked session give up with CHANNEL_CLOSED; safe from any thread.
  void request_stop() { stop_.store(true); }

  SessionState state() const {
    std::lock_guard lock(mu_);
    return state_;
  }

  std::vector<SessionPhase> phase_history() const {
    std::lock_guard lock(mu_);
    return phases_;
  }

  SessionSummary run(const std::string& out_dir) {
    TrainHooks hooks;
    hooks.on_phase = [this](Phase p) {
      if (p == Phase::WARMUP) {
        set_phase(SessionPhase::WARMUP);
        wait_for_client();
      } else if (p == Phase::ADVERSARIAL) {
        set_phase(SessionPhase::TRAINING);
      }
    };
    hooks.on_grasp = [this](const GraspEvent& ev) {
      if (ev.phase == Phase::PRETRAIN) return;
      {
        std::lock_guard lock(mu_);
        state_.episode_id = ev.episode_id;
      }
      last_update_ = state_update_message(ev.episode_id, current_phase(), ev.image, ev.state, ev.gripper);
      pump(0);
      send(last_update_);
    };
    hooks.on_episode = [this](const EpisodeRecord& r) {
      if (r.phase == Phase::PRETRAIN) return;
      {
        std::lock_guard lock(mu_);
        ++state_.episodes_done;
        if (r.adversary_action) (r.adversary_success ? state_.snatches : state_.withstands)++;
        if (r.timed_out) ++state_.timeouts;
      }
      if (r.adversary_action && answered_) {
        send({{"type", "outcome"}, {"request_id", *answered_}, {"withstood", !r.adversary_success}, {"reward", r.reward.total}});
      }
      answered_.reset();
    };
    hooks.on_batch = [this](const BatchProgress& p) {
      pump(0);
      send({{"type", "progress"}, {"batch", p.batch}, {"episodes_done", p.episodes_done}, {"snatch_count", p.snatch_count}});
    };

    TrainResult result = train(cfg_, Adversary::human(*this), out_dir, std::move(hooks));

    set_phase(SessionPhase::EVAL);
    const EarlyStopResult chosen = early_stop_select(result.checkpoints, result.world, cfg_);
    const EvalReport report = evaluate(result.checkpoints[chosen.index].params, result.world, cfg_,
                                       static_cast<std::size_t>(cfg_.train.eval_episodes), cfg_.train.seed);
    SessionSummary summary;
    {
      std::lock_guard lock(mu_);
      summary.episodes = state_.episodes_done;
      summary.snatches = state_.snatches;
      summary.withstands = state_.withstands;
      summary.timeouts = state_.timeouts;
    }
    summary.checkpoints = result.checkpoints.size();
    summary.selected_checkpoint = static_cast<std::size_t>(result.checkpoints[chosen.index].batch);
    summary.eval_pre_rate = report.pre_rate;
    summary.eval_post_rate = report.post_rate;
    summary.log_path = result.log_path;
    set_phase(SessionPhase::DONE);
    send({{"type", "session_end"}, {"summary", to_json(summary)}});
    if (conn_) conn_->close();
    conn_.reset();
    return summary;
  }

  Direction request_action(const AdversaryContext& ctx) override {
    const std::uint64_t id = next_request_id_++;
    {
      std::lock_guard lock(mu_);
      state_.pending_request_id = id;
    }
    // Warm-up requests keep the WARMUP phase; only training alternates with waiting.
    const SessionPhase resume = current_phase();
    if (resume == SessionPhase::TRAINING) set_phase(SessionPhase::WAITING_FOR_HUMAN);
    const nlohmann::json request = {
        {"type", "action_request"}, {"request_id", id}, {"directions", direction_list()}, {"magnitude", ctx.magnitude}};
    send(request);

    const double limit = cfg_.train.human_timeout_s;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(limit);
    for (;;) {
      if (stop_.load()) throw Error(ErrorCode::CHANNEL_CLOSED, "session stopped");
      int slice = 100;
      if (limit > 0.0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
          finish_request(resume);
          send({{"type", "error"}, {"code", "TIMEOUT"}, {"request_id", id}, {"message", "no human action in time"}});
          throw Error(ErrorCode::TIMEOUT, "request " + std::to_string(id) + " timed out");
        }
        slice = static_cast<int>(std::min<long long>(slice, left.count()));
      }
      if (!conn_) {
        // Paused until a client (re)connects; the pending request survives.
        if (accept_client(slice)) {
          send(last_update_);
          send(request);
        }
        continue;
      }
      std::optional<nlohmann::json> msg;
      if (!next_message(slice, msg) || !msg) continue;
      const std::string type = msg->value("type", std::string());
      if (type != "human_action") {
        handle_unsolicited(*msg);
        continue;
      }
      const auto rid = msg->find("request_id");
      if (rid == msg->end() || !rid->is_number_unsigned() || rid->get<std::uint64_t>() != id) {
        send(error_message("STALE_REQUEST", "request_id does not match the open action_request"));
        send(request);
        continue;
      }
      const auto dir = parse_direction(msg->value("direction", std::string()));
      if (!dir) {
        send(error_message("INVALID_DIRECTION", "direction must be one of the six listed"));
        send(request);
        continue;
      }
      answered_ = id;
      finish_request(resume);
      return *dir;
    }
  }

 private:
  SessionPhase current_phase() const {
    std::lock_guard lock(mu_);
    return state_.phase;
  }

  void set_phase(SessionPhase p) {
    std::lock_guard lock(mu_);
    state_.phase = p;
    if (phases_.empty() || phases_.back() != p) phases_.push_back(p);
  }

  void finish_request(SessionPhase resume) {
    {
      std::lock_guard lock(mu_);
      state_.pending_request_id.reset();
    }
    set_phase(resume);
  }

  void send(const nlohmann::json& msg) {
    if (!conn_ || msg.is_null()) return;
    try {
      conn_->send(msg);
    } catch (const Error&) {
      conn_.reset();
    }
  }

  bool accept_client(int timeout_ms) {
    auto sock = listener_.accept(timeout_ms);
    if (!sock) return false;
    try {
      conn_ = wire::Connection::accept_peer(std::move(*sock));
    } catch (const Error&) {
      conn_.reset();
      return false;
    }
    send({{"type", "hello"}, {"protocol_version", wire::kProtocolVersion}, {"session_config", canonical_json(cfg_)}});
    return conn_.has_value();
  }

  void wait_for_client() {
    while (!conn_) {
      if (stop_.load()) throw Error(ErrorCode::CHANNEL_CLOSED, "session stopped");
      accept_client(100);
    }
  }

  // False when the connection dropped; msg stays empty on timeout.
  bool next_message(int timeout_ms, std::optional<nlohmann::json>& msg) {
    try {
      msg = conn_->receive(timeout_ms);
      return true;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::PARSE && conn_->open()) {
        send(error_message("PARSE", e.what()));
        return true;
      }
      conn_.reset();
      return false;
    }
  }

  void handle_unsolicited(const nlohmann::json& msg) {
    const std::string type = msg.value("type", std::string());
    if (type == "hello") return;
    if (type == "human_action") {
      send(error_message("STALE_REQUEST", "no action_request is open"));
      return;
    }
    send(error_message("UNEXPECTED_MESSAGE", "clients send only hello and human_action"));
  }

  // Handles queued client traffic and turns away extra clients.
  void pump(int timeout_ms) {
    if (!conn_) {
      accept_client(0);
      return;
    }
    while (auto extra = listener_.accept(0)) {
      try {
        wire::Connection other = wire::Connection::accept_peer(std::move(*extra));
        other.send(error_message("SESSION_BUSY", "another client controls this session"));
        other.close();
      } catch (const Error&) {
      }
    }
    for (;;) {
      std::optional<nlohmann::json> msg;
      if (!next_message(timeout_ms, msg) || !msg) return;
      handle_unsolicited(*msg);
      timeout_ms = 0;
    }
  }

  RunConfig cfg_;
  wire::Listener listener_;
  std::optional<wire::Connection> conn_;
  mutable std::mutex mu_;
  SessionState state_;
  std::vector<SessionPhase> phases_;
  std::atomic<bool> stop_{false};
  std::uint64_t next_request_id_ = 1;
  std::optional<std::uint64_t> answered_;
  nlohmann::json last_update_;
};

// ---- Replay ----

struct ReplayMismatch {
  std::size_t line = 0;
  std::uint64_t episode_id = 0;
  std::string field;
};

struct ReplayReport {
  std::size_t episodes = 0;
  std::size_t mismatches = 0;
  std::vector<ReplayMismatch> details;
  bool aborted = false;
  std::string config_hash;
  std::uint64_t seed = 0;
  // Adversarial-phase summary: grasp success and held-after-disturbance rates.
  std::size_t adversarial_episodes = 0;
  double grasp_rate = 0.0;
  double held_rate = 0.0;
};

inline nlohmann::json to_json(const ReplayReport& r) {
  nlohmann::json details = nlohmann::json::array();
  for (const ReplayMismatch& m : r.details) details.push_back({{"line", m.line}, {"episode_id", m.episode_id}, {"field", m.field}});
  return {{"episodes", r.episodes},
          {"mismatches", r.mismatches},
          {"details", std::move(details)},
          {"aborted", r.aborted},
          {"config_hash", r.config_hash},
          {"seed", r.seed},
          {"adversarial_episodes", r.adversarial_episodes},
          {"grasp_rate", r.grasp_rate},
          {"held_rate", r.held_rate}};
}

// Recomputes every logged episode from its (object, pose, grasp, action) and
// compares the logged patch, outcomes and reward.
inline ReplayReport replay_stream(std::istream& in) {
  ReplayReport report;
  std::string line;
  std::size_t line_no = 0;
  std::optional<RunConfig> cfg;
  nlohmann::json forces;
  std::optional<std::uint64_t> last_id;
  std::size_t grasped = 0, held = 0;

  auto parse_line = [&](const std::string& text) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::PARSE, "line " + std::to_string(line_no) + ": " + e.what());
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const nlohmann::json j = parse_line(line);
    const std::string type = j.value("type", std::string());
    if (!cfg) {
      if (type != "header") throw Error(ErrorCode::PARSE, "line " + std::to_string(line_no) + ": expected header");
      if (j.value("version", -1) != kLogVersion)
        throw Error(ErrorCode::VERSION_MISMATCH, "log version " + j.value("version", nlohmann::json()).dump());
      const nlohmann::json& config = j.at("config");
      report.config_hash = j.value("config_hash", std::string());
      if (config_hash(config) != report.config_hash)
        throw Error(ErrorCode::VERSION_MISMATCH, "config hash does not match the embedded config");
      try {
        cfg = parse_run_config(config);
      } catch (const Error& e) {
        throw Error(ErrorCode::PARSE, "line " + std::to_string(line_no) + ": " + e.what());
      }
      report.seed = j.value("seed", std::uint64_t{0});
      forces = j.value("calibrated_force", nlohmann::json::object());
      continue;
    }
    if (type == "aborted") {
      report.aborted = true;
      continue;
    }
    if (type != "episode") throw Error(ErrorCode::PARSE, "line " + std::to_string(line_no) + ": unknown record type");
    EpisodeRecord r;
    try {
      r = record_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::PARSE, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::PARSE, "line " + std::to_string(line_no) + ": " + e.what());
    }
    ++report.episodes;
    auto mismatch = [&](std::string field) {
      ++report.mismatches;
      report.details.push_back({line_no, r.episode_id, std::move(field)});
    };
    if (last_id && r.episode_id != *last_id + 1) mismatch("episode_id");
    last_id = r.episode_id;

    const ObjectShape* object = nullptr;
    for (const ObjectShape& o : cfg->objects) {
      if (o.name == r.object) object = &o;
    }
    if (!object) {
      mismatch("object");
      continue;
    }
    if (!forces.contains(r.object) || forces.at(r.object).get<double>() != r.magnitude) mismatch("magnitude");

    const Image img = render_scene(*object, r.pose, cfg->imaging);
    if (!patch_fits(img, r.patch.center, r.patch.width) ||
        encode_pgm(extract_patch(img, r.patch.center, r.patch.width)) != encode_pgm(r.patch))
      mismatch("patch");
    const Vec2 center = pixel_to_world(img, r.patch.center);
    const double theta = bin_center_angle(r.angle_idx, cfg->policy.n_a);
    if (GraspAction(center.x, center.y, theta) != r.grasp) mismatch("grasp");

    const GraspState state = attempt_grasp(*object, r.pose, r.grasp, cfg->gripper);
    if (state.success != r.grasp_success) mismatch("grasp_success");
    bool adversary_success = false;
    if (r.adversary_action) {
      if (!state.success) {
        mismatch("adversary_action");
      } else {
        adversary_success =
            !apply_disturbance(state, *object, cfg->gripper, {*r.adversary_action, r.magnitude}).withstood;
      }
    }
    if (adversary_success != r.adversary_success) mismatch("adversary_success");
    const bool acted = r.adversary_action.has_value() || r.timed_out;
    try {
      const RewardBreakdown reward = compute_reward(state.success, acted && state.success, adversary_success, cfg->train.alpha);
      if (reward.total != r.reward.total || reward.robot_term != r.reward.robot_term ||
          reward.human_term != r.reward.human_term || reward.alpha != r.reward.alpha)
        mismatch("reward");
    } catch (const Error&) {
      mismatch("reward");
    }

    if (r.phase == Phase::ADVERSARIAL) {
      ++report.adversarial_episodes;
      grasped += r.grasp_success;
      held += r.grasp_success && !r.adversary_success;
    }
  }
  if (!cfg) throw Error(ErrorCode::PARSE, "line " + std::to_string(line_no + 1) + ": missing header");
  if (report.adversarial_episodes) {
    report.grasp_rate = 100.0 * grasped / report.adversarial_episodes;
    report.held_rate = 100.0 * held / report.adversarial_episodes;
  }
  return report;
}

inline ReplayReport replay(const std::string& log_path) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO, "cannot read " + log_path);
  return replay_stream(in);
}

}  // namespace advgrasp
