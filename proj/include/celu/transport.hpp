#ifndef CELU_TRANSPORT_HPP
#define CELU_TRANSPORT_HPP

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "celu/matrix.hpp"

namespace celu {

enum class MessageKind : std::uint8_t {
  forward_act = 0,
  backward_der = 1,
  control = 2,
};

// Cross-party payload. batch_id carries the communication-round timestamp.
// The payload travels as float32 on the wire; internal math stays double.
struct Message {
  MessageKind kind = MessageKind::control;
  std::uint64_t batch_id = 0;
  Matrix payload;
};

// Frame layout (little-endian):
//   magic "CVF1" | kind u8 | batch_id u64 | rows u32 | cols u32 |
//   payload rows*cols float32, row-major
// Total length 21 + 4 * rows * cols bytes.
constexpr std::size_t kFrameHeaderBytes = 21;

std::vector<std::uint8_t> encode(const Message& msg);
Message decode(const std::vector<std::uint8_t>& bytes);

// Payload values after a float32 round trip, i.e. what the receiver sees.
Matrix quantize_f32(const Matrix& m);

struct ChannelConfig {
  double bandwidth_bps = 300e6;
  double latency_s = 0.0;
  enum class Mode { in_process, socket } mode = Mode::in_process;
  bool simulate_delay = true;
  bool real_sleep = false;
  std::string host = "127.0.0.1";
  int port = 0;  // 0 lets the OS pick in socket mode
};

// latency + 8 * bytes / bandwidth, in seconds.
double simulated_delay(std::size_t bytes, const ChannelConfig& cfg);

// Per-run simulated clock; frame deliveries are charged here instead of
// sleeping, so desk-scale experiments finish fast.
class SimClock {
 public:
  void advance(double seconds);
  double now() const;

 private:
  mutable std::mutex mu_;
  double now_s_ = 0.0;
};

struct FrameRecord {
  MessageKind kind;
  std::uint64_t batch_id;
  std::uint32_t rows;
  std::uint32_t cols;
  std::uint64_t payload_hash;  // FNV-1a over the encoded frame

  bool operator==(const FrameRecord&) const = default;
};

struct ChannelStats {
  std::size_t frames_sent = 0;
  std::size_t bytes_sent = 0;  // on-the-wire bytes, incl. socket length prefix
};

// One endpoint of a duplex party-to-party channel. send/recv are FIFO per
// direction; recv blocks until the peer has sent. One sender plus one
// receiver may use the same endpoint concurrently; stats() may be polled
// from a third thread. The sent log is for post-run inspection only.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void send(const Message& msg) = 0;
  virtual Message recv() = 0;
  virtual void close() = 0;

  ChannelStats stats() const { return {frames_sent_.load(), bytes_sent_.load()}; }
  const std::vector<FrameRecord>& sent_log() const { return sent_log_; }

 protected:
  void record_send(const Message& msg, const std::vector<std::uint8_t>& frame,
                   std::size_t wire_bytes);
  ChannelConfig cfg_;
  SimClock* clock_ = nullptr;
  std::atomic<std::size_t> frames_sent_{0};
  std::atomic<std::size_t> bytes_sent_{0};
  std::vector<FrameRecord> sent_log_;
};

using EndpointPair = std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>>;

// Two connected in-process endpoints. Frames are moved as encoded bytes so
// the float32 round trip matches socket mode bit for bit.
EndpointPair make_in_process_pair(const ChannelConfig& cfg, SimClock* clock);

// Two endpoints connected over a localhost TCP socket; each frame is
// preceded by a u32 LE length prefix.
EndpointPair make_socket_pair(const ChannelConfig& cfg, SimClock* clock);

EndpointPair make_endpoint_pair(const ChannelConfig& cfg, SimClock* clock);

std::uint64_t fnv1a_hash(const std::vector<std::uint8_t>& bytes);

}  // namespace celu

#endif  // CELU_TRANSPORT_HPP
