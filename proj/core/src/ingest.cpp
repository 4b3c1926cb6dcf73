#include "ctxflow/ingest.hpp"

#include <algorithm>

#include "ctxflow/dissect.hpp"
#include "ctxflow/error.hpp"
#include "ctxflow/pcap_io.hpp"

namespace ctxflow {

DecodeReport decode_capture(const std::filesystem::path& path,
                            const std::function<void(RawPacket&&)>& sink) {
  CaptureReader reader(path);
  DecodeReport report;
  std::optional<std::int64_t> origin;
  while (auto frame = reader.next()) {
    ++report.records;
    if (!origin) origin = frame->timestamp_ns;
    DissectResult r = dissect_frame(frame->data, frame->link_type,
                                    frame->original_length);
    switch (r.status) {
      case DissectStatus::kNonIp:
        ++report.skipped_non_ip;
        continue;
      case DissectStatus::kFailed:
        ++report.decode_failures;
        continue;
      case DissectStatus::kDegraded:
        ++report.degraded;
        break;
      case DissectStatus::kDecoded:
        break;
    }
    RawPacket& p = *r.packet;
    p.packet_index = report.records;
    // Records out of order in the file are clamped so time never runs
    // backwards relative to the first record.
    const std::int64_t rel = std::max<std::int64_t>(0, frame->timestamp_ns - *origin);
    p.timestamp = static_cast<double>(rel) / 1e9;
    ++report.decoded;
    sink(std::move(p));
  }
  report.truncated_tail = reader.truncated();
  return report;
}

DecodedCapture decode_capture(const std::filesystem::path& path,
                              const CaptureLabel& label) {
  DecodedCapture out;
  out.label = label;
  out.report = decode_capture(
      path, [&](RawPacket&& p) { out.packets.push_back(std::move(p)); });
  return out;
}

WindowBuffer::WindowBuffer(std::string capture_name, double window_seconds)
    : capture_name_(std::move(capture_name)), t_(window_seconds) {
  if (!(t_ > 0)) throw ConfigError("window length must be positive");
}

WindowBatch WindowBuffer::make_batch(std::int64_t index) const {
  WindowBatch b;
  b.capture_name = capture_name_;
  b.window_index = index;
  b.start = static_cast<double>(index) * t_;
  b.end = static_cast<double>(index + 1) * t_;
  return b;
}

std::vector<WindowBatch> WindowBuffer::push(RawPacket packet) {
  std::vector<WindowBatch> done;
  const std::int64_t idx = window_index_of(packet.timestamp, t_);
  if (!open_) {
    for (std::int64_t k = 0; k < idx; ++k) done.push_back(make_batch(k));
    open_ = make_batch(idx);
  } else if (idx > open_->window_index) {
    const std::int64_t from = open_->window_index + 1;
    done.push_back(std::move(*open_));
    for (std::int64_t k = from; k < idx; ++k) done.push_back(make_batch(k));
    open_ = make_batch(idx);
  }
  // A packet from an already-closed window (out-of-order record) joins the
  // open window rather than being dropped.
  open_->packets.push_back(std::move(packet));
  return done;
}

std::optional<WindowBatch> WindowBuffer::finish() {
  std::optional<WindowBatch> out = std::move(open_);
  open_.reset();
  return out;
}

std::vector<WindowBatch> window_buffer(std::span<const RawPacket> packets,
                                       double window_seconds,
                                       const std::string& capture_name) {
  WindowBuffer buf(capture_name, window_seconds);
  std::vector<WindowBatch> out;
  for (const auto& p : packets) {
    for (auto& b : buf.push(p)) out.push_back(std::move(b));
  }
  if (auto last = buf.finish()) out.push_back(std::move(*last));
  return out;
}

}  // namespace ctxflow
