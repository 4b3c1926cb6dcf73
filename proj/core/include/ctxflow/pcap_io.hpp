#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

namespace ctxflow {

namespace linktype {
inline constexpr std::uint32_t kEthernet = 1;
inline constexpr std::uint32_t kRaw = 101;
inline constexpr std::uint32_t kLinuxSll = 113;
inline constexpr std::uint32_t kIpv4 = 228;
inline constexpr std::uint32_t kIpv6 = 229;
}  // namespace linktype

// One capture record, independent of the container format.
struct Frame {
  std::int64_t timestamp_ns = 0;  // absolute, as recorded
  std::uint32_t original_length = 0;
  std::uint32_t link_type = linktype::kEthernet;
  std::vector<std::uint8_t> data;  // captured bytes (may be truncated)
};

// Sequential reader for classic pcap (micro/nanosecond, either byte order)
// and pcapng (SHB/IDB/EPB/SPB/OPB blocks, per-interface timestamp resolution).
class CaptureReader {
 public:
  // Throws FileNotFound or MalformedCapture (unreadable file header).
  explicit CaptureReader(const std::filesystem::path& path);

  // Returns the next record or nullopt at end of file. A truncated trailing
  // record ends the stream; `truncated()` reports it.
  std::optional<Frame> next();

  bool is_pcapng() const { return ng_; }
  bool truncated() const { return truncated_; }

 private:
  struct Interface {
    std::uint32_t link_type = linktype::kEthernet;
    std::int64_t ticks_per_second = 1'000'000;
  };

  std::optional<Frame> next_classic();
  std::optional<Frame> next_ng();
  bool read_exact(std::span<std::uint8_t> out);
  std::uint16_t u16(const std::uint8_t* p) const;
  std::uint32_t u32(const std::uint8_t* p) const;
  void parse_idb(std::span<const std::uint8_t> body);

  std::ifstream in_;
  bool ng_ = false;
  bool swap_ = false;
  bool truncated_ = false;
  bool nanos_ = false;
  std::uint32_t classic_link_ = linktype::kEthernet;
  std::vector<Interface> interfaces_;
};

// Writes classic pcap files (microsecond resolution, little endian).
class PcapWriter {
 public:
  PcapWriter(const std::filesystem::path& path, std::uint32_t link_type,
             std::uint32_t snaplen = 262144);

  void write(std::int64_t timestamp_ns, std::span<const std::uint8_t> data,
             std::uint32_t original_length);
  void write(const Frame& f) {
    write(f.timestamp_ns, f.data, f.original_length);
  }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

// Writes pcapng files with a single interface (nanosecond resolution).
class PcapngWriter {
 public:
  PcapngWriter(const std::filesystem::path& path, std::uint32_t link_type);

  void write(std::int64_t timestamp_ns, std::span<const std::uint8_t> data,
             std::uint32_t original_length);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

}  // namespace ctxflow
