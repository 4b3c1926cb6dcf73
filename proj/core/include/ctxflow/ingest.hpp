#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxflow/packet.hpp"

namespace ctxflow {

struct DecodeReport {
  std::uint64_t records = 0;         // every record in the file
  std::uint64_t decoded = 0;         // RawPackets produced (incl. degraded)
  std::uint64_t degraded = 0;        // transport/app layer unreadable
  std::uint64_t skipped_non_ip = 0;
  std::uint64_t decode_failures = 0; // unusable link/IP header, skipped
  bool truncated_tail = false;
};

struct DecodedCapture {
  CaptureLabel label;
  std::vector<RawPacket> packets;
  DecodeReport report;
};

// Streams RawPackets in file order. Timestamps are made relative to the
// first record of the file. Throws FileNotFound / MalformedCapture.
DecodeReport decode_capture(const std::filesystem::path& path,
                            const std::function<void(RawPacket&&)>& sink);
DecodedCapture decode_capture(const std::filesystem::path& path,
                              const CaptureLabel& label);

struct WindowBatch {
  std::string capture_name;
  std::int64_t window_index = 0;
  double start = 0.0;  // inclusive
  double end = 0.0;    // exclusive
  std::vector<RawPacket> packets;
};

inline std::int64_t window_index_of(double timestamp, double window_seconds) {
  return static_cast<std::int64_t>(std::floor(timestamp / window_seconds));
}

// Incremental buffer: packets must arrive in non-decreasing window order
// (true for any capture read in file order with relative timestamps).
class WindowBuffer {
 public:
  WindowBuffer(std::string capture_name, double window_seconds);

  // Returns the batches completed by this packet (possibly empty windows
  // preceding it).
  std::vector<WindowBatch> push(RawPacket packet);
  // Flushes the open window, if any. No trailing empty windows are emitted.
  std::optional<WindowBatch> finish();

 private:
  WindowBatch make_batch(std::int64_t index) const;

  std::string capture_name_;
  double t_;
  std::optional<WindowBatch> open_;
};

// Partitions a packet sequence into half-open windows [k*t, (k+1)*t).
// Windows run from index 0 to the last non-empty one. Throws ConfigError if
// t <= 0.
std::vector<WindowBatch> window_buffer(std::span<const RawPacket> packets,
                                       double window_seconds,
                                       const std::string& capture_name = {});

}  // namespace ctxflow
