#include "celu/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "celu/error.hpp"

namespace celu {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'V', 'F', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const Message& msg) {
  const std::size_t rows = msg.payload.rows();
  const std::size_t cols = msg.payload.cols();
  if (rows > UINT32_MAX || cols > UINT32_MAX ||
      (cols != 0 && rows > UINT32_MAX / cols)) {
    raise(ErrorKind::size, "encode: payload " + std::to_string(rows) + "x" +
                               std::to_string(cols) + " exceeds u32 cells");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderBytes + 4 * rows * cols);
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(msg.kind));
  put_u64(out, msg.batch_id);
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  for (double v : msg.payload.data()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

Message decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kFrameHeaderBytes) {
    raise(ErrorKind::protocol, "decode: truncated frame (" +
                                   std::to_string(bytes.size()) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    raise(ErrorKind::protocol, "decode: bad magic");
  }
  const std::uint8_t kind = bytes[4];
  if (kind > 2) {
    raise(ErrorKind::protocol, "decode: unknown message kind " + std::to_string(kind));
  }
  Message msg;
  msg.kind = static_cast<MessageKind>(kind);
  msg.batch_id = get_u64(bytes.data() + 5);
  const std::uint32_t rows = get_u32(bytes.data() + 13);
  const std::uint32_t cols = get_u32(bytes.data() + 17);
  const std::size_t expected = kFrameHeaderBytes +
                               4 * static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != expected) {
    raise(ErrorKind::protocol, "decode: frame length " + std::to_string(bytes.size()) +
                                   " does not match header (" +
                                   std::to_string(expected) + ")");
  }
  msg.payload = Matrix(rows, cols);
  for (std::size_t i = 0; i < msg.payload.data().size(); ++i) {
    const std::uint32_t bits = get_u32(bytes.data() + kFrameHeaderBytes + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    msg.payload.data()[i] = static_cast<double>(f);
  }
  return msg;
}

Matrix quantize_f32(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

double simulated_delay(std::size_t bytes, const ChannelConfig& cfg) {
  return cfg.latency_s + 8.0 * static_cast<double>(bytes) / cfg.bandwidth_bps;
}

void SimClock::advance(double seconds) {
  std::lock_guard<std::mutex> lock(mu_);
  now_s_ += seconds;
}

double SimClock::now() const {
  std::lock_guard<std::mutex> lock(mu_);
  return now_s_;
}

std::uint64_t fnv1a_hash(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

void Endpoint::record_send(const Message& msg, const std::vector<std::uint8_t>& frame,
                           std::size_t wire_bytes) {
  frames_sent_.fetch_add(1);
  bytes_sent_.fetch_add(wire_bytes);
  sent_log_.push_back(FrameRecord{msg.kind, msg.batch_id,
                                  static_cast<std::uint32_t>(msg.payload.rows()),
                                  static_cast<std::uint32_t>(msg.payload.cols()),
                                  fnv1a_hash(frame)});
  if (clock_ && cfg_.simulate_delay) {
    const double d = simulated_delay(wire_bytes, cfg_);
    clock_->advance(d);
    if (cfg_.real_sleep) {
      std::this_thread::sleep_for(std::chrono::duration<double>(d));
    }
  }
}

namespace {

// Shared state of one direction of the in-process channel.
struct FrameQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> frames;
  bool closed = false;

  void push(std::vector<std::uint8_t> frame) {
    {
      std::lock_guard<std::mutex> lock(mu);
      if (closed) raise(ErrorKind::channel_closed, "send on closed channel");
      frames.push_back(std::move(frame));
    }
    cv.notify_one();
  }

  std::vector<std::uint8_t> pop() {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [this] { return !frames.empty() || closed; });
    if (frames.empty()) {
      raise(ErrorKind::channel_closed, "recv on closed channel");
    }
    std::vector<std::uint8_t> frame = std::move(frames.front());
    frames.pop_front();
    return frame;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lock(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class InProcessEndpoint final : public Endpoint {
 public:
  InProcessEndpoint(const ChannelConfig& cfg, SimClock* clock,
                    std::shared_ptr<FrameQueue> out, std::shared_ptr<FrameQueue> in)
      : out_(std::move(out)), in_(std::move(in)) {
    cfg_ = cfg;
    clock_ = clock;
  }

  ~InProcessEndpoint() override { close(); }

  void send(const Message& msg) override {
    std::vector<std::uint8_t> frame = encode(msg);
    record_send(msg, frame, frame.size());
    out_->push(std::move(frame));
  }

  Message recv() override { return decode(in_->pop()); }

  void close() override {
    out_->close();
    in_->close();
  }

 private:
  std::shared_ptr<FrameQueue> out_;
  std::shared_ptr<FrameQueue> in_;
};

[[noreturn]] void raise_errno(const std::string& what) {
  raise(ErrorKind::io, what + ": " + std::strerror(errno));
}

class SocketEndpoint final : public Endpoint {
 public:
  SocketEndpoint(const ChannelConfig& cfg, SimClock* clock, int fd) : fd_(fd) {
    cfg_ = cfg;
    clock_ = clock;
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  ~SocketEndpoint() override { close(); }

  void send(const Message& msg) override {
    std::vector<std::uint8_t> frame = encode(msg);
    std::vector<std::uint8_t> wire;
    wire.reserve(4 + frame.size());
    put_u32(wire, static_cast<std::uint32_t>(frame.size()));
    wire.insert(wire.end(), frame.begin(), frame.end());
    record_send(msg, frame, wire.size());
    write_all(wire.data(), wire.size());
  }

  Message recv() override {
    std::uint8_t len_bytes[4];
    read_all(len_bytes, 4);
    const std::uint32_t len = get_u32(len_bytes);
    std::vector<std::uint8_t> frame(len);
    read_all(frame.data(), len);
    return decode(frame);
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  void write_all(const std::uint8_t* data, std::size_t len) {
    std::size_t done = 0;
    while (done < len) {
      const ssize_t n = ::write(fd_, data + done, len - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        raise_errno("socket write");
      }
      if (n == 0) raise(ErrorKind::channel_closed, "peer closed during write");
      done += static_cast<std::size_t>(n);
    }
  }

  void read_all(std::uint8_t* data, std::size_t len) {
    std::size_t done = 0;
    while (done < len) {
      const ssize_t n = ::read(fd_, data + done, len - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        raise_errno("socket read");
      }
      if (n == 0) raise(ErrorKind::channel_closed, "peer closed the channel");
      done += static_cast<std::size_t>(n);
    }
  }

  int fd_ = -1;
};

}  // namespace

EndpointPair make_in_process_pair(const ChannelConfig& cfg, SimClock* clock) {
  auto a_to_b = std::make_shared<FrameQueue>();
  auto b_to_a = std::make_shared<FrameQueue>();
  return {std::make_unique<InProcessEndpoint>(cfg, clock, a_to_b, b_to_a),
          std::make_unique<InProcessEndpoint>(cfg, clock, b_to_a, a_to_b)};
}

EndpointPair make_socket_pair(const ChannelConfig& cfg, SimClock* clock) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) raise_errno("socket");
  int one = 1;
  setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(cfg.port));
  if (inet_pton(AF_INET, cfg.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listener);
    raise(ErrorKind::config, "socket transport: bad host '" + cfg.host + "'");
  }
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(listener);
    raise_errno("bind");
  }
  if (::listen(listener, 1) < 0) {
    ::close(listener);
    raise_errno("listen");
  }
  socklen_t addr_len = sizeof(addr);
  if (::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &addr_len) < 0) {
    ::close(listener);
    raise_errno("getsockname");
  }

  const int client = ::socket(AF_INET, SOCK_STREAM, 0);
  if (client < 0) {
    ::close(listener);
    raise_errno("socket");
  }
  if (::connect(client, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(listener);
    ::close(client);
    raise_errno("connect");
  }
  const int accepted = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (accepted < 0) {
    ::close(client);
    raise_errno("accept");
  }
  return {std::make_unique<SocketEndpoint>(cfg, clock, client),
          std::make_unique<SocketEndpoint>(cfg, clock, accepted)};
}

EndpointPair make_endpoint_pair(const ChannelConfig& cfg, SimClock* clock) {
  if (cfg.mode == ChannelConfig::Mode::socket) {
    return make_socket_pair(cfg, clock);
  }
  return make_in_process_pair(cfg, clock);
}

}  // namespace celu
