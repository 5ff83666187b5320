#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "hetpar/comm.hpp"

namespace hetpar {

namespace {

// Wire protocol, little-endian:
//   u32 payload length | u8 opcode | u32 seq | u16 rank | payload
constexpr uint16_t kProtocolVersion = 1;
constexpr uint8_t kOpError = 0;
constexpr uint8_t kOpHello = 1;
constexpr uint8_t kOpBroadcast = 2;
constexpr uint8_t kOpReduceContrib = 3;
constexpr uint8_t kOpReduceResult = 4;
constexpr uint8_t kOpGather = 5;
constexpr uint8_t kOpBarrier = 6;
constexpr uint8_t kOpBye = 7;
constexpr uint32_t kMaxPayload = 1u << 30;

using Clock = std::chrono::steady_clock;

struct Frame {
  uint8_t opcode = 0;
  uint32_t seq = 0;
  uint16_t rank = 0;
  std::vector<uint8_t> payload;
};

struct Socket {
  int fd = -1;

  Socket() = default;
  explicit Socket(int f) : fd(f) {}
  Socket(Socket&& o) noexcept : fd(o.fd) { o.fd = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_now();
      fd = o.fd;
      o.fd = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close_now(); }

  void close_now() {
    if (fd >= 0) {
      ::close(fd);
      fd = -1;
    }
  }
  bool valid() const { return fd >= 0; }
};

void set_timeouts(int fd, int timeout_ms) {
  timeval tv;
  tv.tv_sec = timeout_ms / 1000;
  tv.tv_usec = (timeout_ms % 1000) * 1000;
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

void send_all(int fd, const void* buf, size_t n) {
  const uint8_t* p = static_cast<const uint8_t*>(buf);
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw comm_error(std::string("send failed: ") + std::strerror(errno));
    }
    p += w;
    n -= static_cast<size_t>(w);
  }
}

void recv_all(int fd, void* buf, size_t n) {
  uint8_t* p = static_cast<uint8_t*>(buf);
  while (n > 0) {
    ssize_t r = ::recv(fd, p, n, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        throw comm_error("receive timeout");
      throw comm_error(std::string("receive failed: ") + std::strerror(errno));
    }
    if (r == 0) throw comm_error("peer closed the connection");
    p += r;
    n -= static_cast<size_t>(r);
  }
}

void send_frame(int fd, uint8_t opcode, uint32_t seq, uint16_t rank,
                const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  put_u32(head, static_cast<uint32_t>(payload.size()));
  put_u8(head, opcode);
  put_u32(head, seq);
  put_u16(head, rank);
  send_all(fd, head.data(), head.size());
  if (!payload.empty()) send_all(fd, payload.data(), payload.size());
}

Frame recv_frame(int fd) {
  uint8_t head[11];
  recv_all(fd, head, sizeof(head));
  ByteReader r(head, sizeof(head));
  uint32_t len = r.u32();
  Frame f;
  f.opcode = r.u8();
  f.seq = r.u32();
  f.rank = r.u16();
  if (len > kMaxPayload) throw comm_error("oversized frame");
  f.payload.resize(len);
  if (len) recv_all(fd, f.payload.data(), len);
  return f;
}

[[noreturn]] void throw_error_frame(const Frame& f) {
  throw comm_error("remote error: " +
                   std::string(f.payload.begin(), f.payload.end()));
}

std::vector<uint8_t> message_bytes(const std::string& s) {
  return std::vector<uint8_t>(s.begin(), s.end());
}

sockaddr_in make_addr(const std::string& host, uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw comm_error("bad master address: " + host);
  return addr;
}

// Rank 0: accepts world-1 peers, validates HELLOs, then drives every
// collective as a request/reply exchange, reading peers in rank order so
// the reduction fold is arrival-order independent.
class TcpMasterGroup final : public ProcessGroup {
 public:
  explicit TcpMasterGroup(const TcpConfig& cfg)
      : ProcessGroup(cfg.world, 0), timeout_ms_(cfg.timeout_ms) {
    Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener.valid()) throw comm_error("cannot create socket");
    int one = 1;
    setsockopt(listener.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = make_addr(cfg.host, cfg.port);
    if (::bind(listener.fd, reinterpret_cast<sockaddr*>(&addr),
               sizeof(addr)) != 0)
      throw comm_error("cannot bind " + cfg.host + ":" +
                       std::to_string(cfg.port) + ": " + std::strerror(errno));
    if (::listen(listener.fd, static_cast<int>(world_)) != 0)
      throw comm_error("cannot listen");

    peers_.resize(world_);  // index by rank; 0 unused
    auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms_);
    size_t joined = 0;
    while (joined + 1 < world_) {
      int remaining = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(
              deadline - Clock::now())
              .count());
      if (remaining <= 0) {
        fail_all("timeout waiting for " +
                 std::to_string(world_ - 1 - joined) + " ranks to join");
      }
      pollfd pfd{listener.fd, POLLIN, 0};
      int pr = ::poll(&pfd, 1, remaining);
      if (pr <= 0)
        fail_all("timeout waiting for " +
                 std::to_string(world_ - 1 - joined) + " ranks to join");
      Socket peer(::accept(listener.fd, nullptr, nullptr));
      if (!peer.valid()) continue;
      set_timeouts(peer.fd, timeout_ms_);

      Frame hello = recv_frame(peer.fd);
      if (hello.opcode != kOpHello || hello.payload.size() != 6) {
        send_frame(peer.fd, kOpError, 0, 0,
                   message_bytes("handshake expected HELLO"));
        continue;
      }
      ByteReader r(hello.payload);
      uint16_t version = r.u16();
      uint16_t peer_world = r.u16();
      uint16_t peer_rank = r.u16();
      if (version != kProtocolVersion) {
        send_frame(peer.fd, kOpError, 0, 0,
                   message_bytes("protocol version mismatch: peer " +
                                 std::to_string(version) + ", master " +
                                 std::to_string(kProtocolVersion)));
        continue;
      }
      if (peer_world != world_) {
        std::string msg = "world_size mismatch: peer says " +
                          std::to_string(peer_world) + ", master says " +
                          std::to_string(world_);
        send_frame(peer.fd, kOpError, 0, 0, message_bytes(msg));
        fail_all(msg);
      }
      if (peer_rank == 0 || peer_rank >= world_) {
        std::string msg = "peer claimed invalid rank " +
                          std::to_string(peer_rank);
        send_frame(peer.fd, kOpError, 0, 0, message_bytes(msg));
        fail_all(msg);
      }
      if (peers_[peer_rank].valid()) {
        // Both claimants get the error, then the whole group fails.
        std::string msg = "duplicate rank " + std::to_string(peer_rank);
        send_frame(peer.fd, kOpError, 0, 0, message_bytes(msg));
        fail_all(msg);
      }
      peers_[peer_rank] = std::move(peer);
      ++joined;
    }

    std::vector<uint8_t> ack;
    put_u16(ack, kProtocolVersion);
    put_u16(ack, static_cast<uint16_t>(world_));
    put_u16(ack, 0);
    for (size_t r = 1; r < world_; ++r)
      send_frame(peers_[r].fd, kOpHello, 0, 0, ack);
  }

  ~TcpMasterGroup() override {
    try {
      for (size_t r = 1; r < world_; ++r) {
        if (!peers_[r].valid()) continue;
        Frame f = recv_frame(peers_[r].fd);
        if (f.opcode == kOpBye) send_frame(peers_[r].fd, kOpBye, 0, 0, {});
      }
    } catch (const std::exception& e) {
      log_debug(std::string("tcp master shutdown: ") + e.what());
    }
  }

  std::vector<uint8_t> broadcast(const std::vector<uint8_t>& payload,
                                 size_t root) override {
    if (root >= world_) throw comm_error("broadcast root out of range");
    std::vector<uint8_t> bytes = root == 0 ? payload : std::vector<uint8_t>{};
    for (size_t r = 1; r < world_; ++r) {
      Frame f = expect(r, kOpBroadcast);
      if (f.payload.size() < 2) fail_all("malformed broadcast request");
      ByteReader br(f.payload);
      uint16_t peer_root = br.u16();
      if (peer_root != root)
        fail_all("broadcast root mismatch: rank " + std::to_string(r) +
                 " names root " + std::to_string(peer_root) + ", master " +
                 std::to_string(root));
      if (r == root)
        bytes.assign(f.payload.begin() + 2, f.payload.end());
    }
    for (size_t r = 1; r < world_; ++r)
      send_frame(peers_[r].fd, kOpBroadcast, seq_, 0, bytes);
    ++seq_;
    return bytes;
  }

  std::vector<double> all_reduce_sum(const std::vector<double>& v) override {
    std::vector<std::vector<double>> contribs;
    contribs.push_back(v);
    for (size_t r = 1; r < world_; ++r) {
      Frame f = expect(r, kOpReduceContrib);
      if (f.payload.size() % 8 != 0) fail_all("malformed reduce payload");
      std::vector<double> c(f.payload.size() / 8);
      if (!c.empty()) std::memcpy(c.data(), f.payload.data(), f.payload.size());
      contribs.push_back(std::move(c));
    }
    std::vector<double> sum;
    try {
      sum = fold_rank_ordered(contribs);
    } catch (const comm_error& e) {
      fail_all(e.what());
    }
    std::vector<uint8_t> bytes(sum.size() * 8);
    if (!bytes.empty()) std::memcpy(bytes.data(), sum.data(), bytes.size());
    for (size_t r = 1; r < world_; ++r)
      send_frame(peers_[r].fd, kOpReduceResult, seq_, 0, bytes);
    ++seq_;
    return sum;
  }

  std::vector<double> gather_scalars(double v) override {
    std::vector<double> all(world_);
    all[0] = v;
    for (size_t r = 1; r < world_; ++r) {
      Frame f = expect(r, kOpGather);
      if (f.payload.size() != 8) fail_all("malformed gather payload");
      std::memcpy(&all[r], f.payload.data(), 8);
    }
    for (size_t r = 1; r < world_; ++r)
      send_frame(peers_[r].fd, kOpGather, seq_, 0, {});
    ++seq_;
    return all;
  }

  void barrier() override {
    for (size_t r = 1; r < world_; ++r) expect(r, kOpBarrier);
    for (size_t r = 1; r < world_; ++r)
      send_frame(peers_[r].fd, kOpBarrier, seq_, 0, {});
    ++seq_;
  }

 private:
  // Reads rank r's next frame and validates opcode/seq/rank stamping.
  Frame expect(size_t r, uint8_t opcode) {
    Frame f = recv_frame(peers_[r].fd);
    if (f.opcode == kOpError) throw_error_frame(f);
    if (f.opcode != opcode)
      fail_all("rank " + std::to_string(r) + " sent opcode " +
               std::to_string(f.opcode) + ", expected " +
               std::to_string(opcode));
    if (f.seq != seq_)
      fail_all("rank " + std::to_string(r) + " is at seq " +
               std::to_string(f.seq) + ", master at " + std::to_string(seq_));
    if (f.rank != r)
      fail_all("frame stamped rank " + std::to_string(f.rank) +
               " arrived on rank " + std::to_string(r) + "'s connection");
    return f;
  }

  // Sends an ERROR frame to every connected peer, then throws locally.
  [[noreturn]] void fail_all(const std::string& msg) {
    for (size_t r = 1; r < peers_.size(); ++r) {
      if (!peers_[r].valid()) continue;
      try {
        send_frame(peers_[r].fd, kOpError, seq_, 0, message_bytes(msg));
      } catch (const std::exception&) {
      }
    }
    throw comm_error(msg);
  }

  int timeout_ms_;
  std::vector<Socket> peers_;
  uint32_t seq_ = 0;
};

// Ranks 1..world-1: one connection to the master, strict request/reply.
class TcpPeerGroup final : public ProcessGroup {
 public:
  explicit TcpPeerGroup(const TcpConfig& cfg)
      : ProcessGroup(cfg.world, cfg.rank) {
    sockaddr_in addr = make_addr(cfg.host, cfg.port);
    auto deadline = Clock::now() + std::chrono::milliseconds(cfg.timeout_ms);
    for (;;) {
      Socket s(::socket(AF_INET, SOCK_STREAM, 0));
      if (!s.valid()) throw comm_error("cannot create socket");
      if (::connect(s.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) ==
          0) {
        sock_ = std::move(s);
        break;
      }
      if (Clock::now() >= deadline)
        throw comm_error("timeout connecting to master " + cfg.host + ":" +
                         std::to_string(cfg.port));
      std::this_thread::sleep_for(std::chrono::milliseconds(30));
    }
    set_timeouts(sock_.fd, cfg.timeout_ms);

    std::vector<uint8_t> hello;
    put_u16(hello, kProtocolVersion);
    put_u16(hello, static_cast<uint16_t>(world_));
    put_u16(hello, static_cast<uint16_t>(rank_));
    send_frame(sock_.fd, kOpHello, 0, static_cast<uint16_t>(rank_), hello);
    Frame ack = recv_frame(sock_.fd);
    if (ack.opcode == kOpError) throw_error_frame(ack);
    if (ack.opcode != kOpHello)
      throw comm_error("handshake expected HELLO ack");
  }

  ~TcpPeerGroup() override {
    if (!sock_.valid()) return;
    try {
      send_frame(sock_.fd, kOpBye, seq_, static_cast<uint16_t>(rank_), {});
      Frame f = recv_frame(sock_.fd);
      (void)f;
    } catch (const std::exception& e) {
      log_debug(std::string("tcp peer shutdown: ") + e.what());
    }
  }

  std::vector<uint8_t> broadcast(const std::vector<uint8_t>& payload,
                                 size_t root) override {
    if (root >= world_) throw comm_error("broadcast root out of range");
    std::vector<uint8_t> req;
    put_u16(req, static_cast<uint16_t>(root));
    if (rank_ == root) put_bytes(req, payload.data(), payload.size());
    send_frame(sock_.fd, kOpBroadcast, seq_, static_cast<uint16_t>(rank_),
               req);
    return expect_reply(kOpBroadcast).payload;
  }

  std::vector<double> all_reduce_sum(const std::vector<double>& v) override {
    std::vector<uint8_t> bytes(v.size() * 8);
    if (!bytes.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
    send_frame(sock_.fd, kOpReduceContrib, seq_, static_cast<uint16_t>(rank_),
               bytes);
    Frame f = expect_reply(kOpReduceResult);
    std::vector<double> sum(f.payload.size() / 8);
    if (!sum.empty()) std::memcpy(sum.data(), f.payload.data(), f.payload.size());
    return sum;
  }

  std::vector<double> gather_scalars(double v) override {
    std::vector<uint8_t> bytes(8);
    std::memcpy(bytes.data(), &v, 8);
    send_frame(sock_.fd, kOpGather, seq_, static_cast<uint16_t>(rank_), bytes);
    expect_reply(kOpGather);
    return {};
  }

  void barrier() override {
    send_frame(sock_.fd, kOpBarrier, seq_, static_cast<uint16_t>(rank_), {});
    expect_reply(kOpBarrier);
  }

 private:
  Frame expect_reply(uint8_t opcode) {
    Frame f = recv_frame(sock_.fd);
    if (f.opcode == kOpError) throw_error_frame(f);
    if (f.opcode != opcode)
      throw comm_error("master replied opcode " + std::to_string(f.opcode) +
                       ", expected " + std::to_string(opcode));
    if (f.seq != seq_)
      throw comm_error("master reply at seq " + std::to_string(f.seq) +
                       ", local seq " + std::to_string(seq_));
    ++seq_;
    return f;
  }

  Socket sock_;
  uint32_t seq_ = 0;
};

}  // namespace

std::unique_ptr<ProcessGroup> make_tcp_group(const TcpConfig& cfg) {
  if (cfg.port == 0)
    throw comm_error("tcp backend requires an explicit master port");
  if (cfg.rank == 0) return std::make_unique<TcpMasterGroup>(cfg);
  return std::make_unique<TcpPeerGroup>(cfg);
}

}  // namespace hetpar
