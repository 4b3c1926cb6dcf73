#include "ctxflow/pcap_io.hpp"

#include <array>
#include <cstring>

#include "ctxflow/error.hpp"

namespace ctxflow {
namespace {

constexpr std::uint32_t kClassicMicros = 0xa1b2c3d4u;
constexpr std::uint32_t kClassicNanos = 0xa1b23c4du;
constexpr std::uint32_t kNgSectionHeader = 0x0a0d0d0au;
constexpr std::uint32_t kNgByteOrderMagic = 0x1a2b3c4du;
constexpr std::uint32_t kNgInterfaceDesc = 0x00000001u;
constexpr std::uint32_t kNgObsoletePacket = 0x00000002u;
constexpr std::uint32_t kNgSimplePacket = 0x00000003u;
constexpr std::uint32_t kNgEnhancedPacket = 0x00000006u;
constexpr std::uint32_t kMaxBlock = 64u * 1024u * 1024u;

std::uint32_t bswap32(std::uint32_t v) { return __builtin_bswap32(v); }
std::uint16_t bswap16(std::uint16_t v) { return __builtin_bswap16(v); }

std::uint32_t load_le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

std::int64_t ticks_to_ns(std::uint64_t ticks, std::int64_t per_second) {
  const auto tps = static_cast<std::uint64_t>(per_second);
  const std::uint64_t whole = ticks / tps;
  const std::uint64_t rem = ticks % tps;
  return static_cast<std::int64_t>(whole * 1'000'000'000ull +
                                   rem * 1'000'000'000ull / tps);
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

CaptureReader::CaptureReader(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw FileNotFound(path.string());
  }
  in_.open(path, std::ios::binary);
  if (!in_) throw FileNotFound(path.string());

  std::array<std::uint8_t, 4> magic{};
  if (!read_exact(magic)) {
    throw MalformedCapture("truncated capture header: " + path.string());
  }
  const std::uint32_t m = load_le32(magic.data());
  if (m == kNgSectionHeader) {
    ng_ = true;
    // Rewind so next_ng() sees the section header as an ordinary block.
    in_.clear();
    in_.seekg(0);
    std::array<std::uint8_t, 12> shb{};
    if (!read_exact(shb)) {
      throw MalformedCapture("truncated pcapng section header: " +
                             path.string());
    }
    const std::uint32_t bom = load_le32(shb.data() + 8);
    if (bom != kNgByteOrderMagic && bswap32(bom) != kNgByteOrderMagic) {
      throw MalformedCapture("bad pcapng byte-order magic: " + path.string());
    }
    in_.seekg(0);
    return;
  }

  if (m == kClassicMicros || m == kClassicNanos) {
    swap_ = false;
  } else if (bswap32(m) == kClassicMicros || bswap32(m) == kClassicNanos) {
    swap_ = true;
  } else {
    throw MalformedCapture("not a packet capture file: " + path.string());
  }
  nanos_ = (m == kClassicNanos || bswap32(m) == kClassicNanos);
  std::array<std::uint8_t, 20> rest{};
  if (!read_exact(rest)) {
    throw MalformedCapture("truncated capture header: " + path.string());
  }
  classic_link_ = u32(rest.data() + 16) & 0x0fffffffu;
}

bool CaptureReader::read_exact(std::span<std::uint8_t> out) {
  in_.read(reinterpret_cast<char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  return static_cast<std::size_t>(in_.gcount()) == out.size();
}

std::uint16_t CaptureReader::u16(const std::uint8_t* p) const {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return swap_ ? bswap16(v) : v;
}

std::uint32_t CaptureReader::u32(const std::uint8_t* p) const {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return swap_ ? bswap32(v) : v;
}

std::optional<Frame> CaptureReader::next() {
  return ng_ ? next_ng() : next_classic();
}

std::optional<Frame> CaptureReader::next_classic() {
  std::array<std::uint8_t, 16> hdr{};
  in_.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got == 0) return std::nullopt;
  if (got != hdr.size()) {
    truncated_ = true;
    return std::nullopt;
  }
  const std::uint32_t sec = u32(hdr.data());
  const std::uint32_t frac = u32(hdr.data() + 4);
  const std::uint32_t incl = u32(hdr.data() + 8);
  const std::uint32_t orig = u32(hdr.data() + 12);
  if (incl > kMaxBlock) {
    truncated_ = true;
    return std::nullopt;
  }
  Frame f;
  f.timestamp_ns = static_cast<std::int64_t>(sec) * 1'000'000'000 +
                   static_cast<std::int64_t>(frac) * (nanos_ ? 1 : 1000);
  f.original_length = orig;
  f.link_type = classic_link_;
  f.data.resize(incl);
  if (!read_exact(f.data)) {
    truncated_ = true;
    return std::nullopt;
  }
  return f;
}

void CaptureReader::parse_idb(std::span<const std::uint8_t> body) {
  Interface itf;
  if (body.size() >= 8) {
    itf.link_type = u16(body.data());
    std::size_t off = 8;
    while (off + 4 <= body.size()) {
      const std::uint16_t code = u16(body.data() + off);
      const std::uint16_t len = u16(body.data() + off + 2);
      off += 4;
      if (code == 0 || off + len > body.size()) break;
      if (code == 9 && len >= 1) {
        const std::uint8_t v = body[off];
        std::int64_t tps = 1;
        if (v & 0x80) {
          const int exp = v & 0x7f;
          tps = exp >= 62 ? (std::int64_t{1} << 62) : (std::int64_t{1} << exp);
        } else {
          for (int i = 0; i < v && tps < 1'000'000'000'000'000'000; ++i) {
            tps *= 10;
          }
        }
        itf.ticks_per_second = tps;
      }
      off += (len + 3u) & ~3u;
    }
  }
  interfaces_.push_back(itf);
}

std::optional<Frame> CaptureReader::next_ng() {
  for (;;) {
    std::array<std::uint8_t, 8> hdr{};
    in_.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) return std::nullopt;
    if (got != hdr.size()) {
      truncated_ = true;
      return std::nullopt;
    }
    const std::uint32_t raw_type = load_le32(hdr.data());
    if (raw_type == kNgSectionHeader) {
      // Byte order is only known after reading the byte-order magic.
      std::array<std::uint8_t, 4> bom{};
      if (!read_exact(bom)) {
        truncated_ = true;
        return std::nullopt;
      }
      swap_ = load_le32(bom.data()) != kNgByteOrderMagic;
      interfaces_.clear();
      const std::uint32_t total = u32(hdr.data() + 4);
      if (total < 28 || total > kMaxBlock) {
        truncated_ = true;
        return std::nullopt;
      }
      std::vector<std::uint8_t> skip(total - 12);
      if (!read_exact(skip)) {
        truncated_ = true;
        return std::nullopt;
      }
      continue;
    }

    const std::uint32_t type = u32(hdr.data());
    const std::uint32_t total = u32(hdr.data() + 4);
    if (total < 12 || total > kMaxBlock || total % 4 != 0) {
      truncated_ = true;
      return std::nullopt;
    }
    std::vector<std::uint8_t> body(total - 8);
    if (!read_exact(body)) {
      truncated_ = true;
      return std::nullopt;
    }
    body.resize(body.size() - 4);  // trailing total length

    if (type == kNgInterfaceDesc) {
      parse_idb(body);
      continue;
    }
    if (type == kNgEnhancedPacket && body.size() >= 20) {
      const std::uint32_t if_id = u32(body.data());
      const std::uint64_t ts = (std::uint64_t{u32(body.data() + 4)} << 32) |
                               u32(body.data() + 8);
      const std::uint32_t cap = u32(body.data() + 12);
      const std::uint32_t orig = u32(body.data() + 16);
      if (20 + static_cast<std::size_t>(cap) > body.size()) {
        truncated_ = true;
        return std::nullopt;
      }
      const Interface itf =
          if_id < interfaces_.size() ? interfaces_[if_id] : Interface{};
      Frame f;
      f.timestamp_ns = ticks_to_ns(ts, itf.ticks_per_second);
      f.original_length = orig;
      f.link_type = itf.link_type;
      f.data.assign(body.begin() + 20, body.begin() + 20 + cap);
      return f;
    }
    if (type == kNgObsoletePacket && body.size() >= 20) {
      const std::uint16_t if_id = u16(body.data());
      const std::uint64_t ts = (std::uint64_t{u32(body.data() + 4)} << 32) |
                               u32(body.data() + 8);
      const std::uint32_t cap = u32(body.data() + 12);
      const std::uint32_t orig = u32(body.data() + 16);
      if (20 + static_cast<std::size_t>(cap) > body.size()) {
        truncated_ = true;
        return std::nullopt;
      }
      const Interface itf =
          if_id < interfaces_.size() ? interfaces_[if_id] : Interface{};
      Frame f;
      f.timestamp_ns = ticks_to_ns(ts, itf.ticks_per_second);
      f.original_length = orig;
      f.link_type = itf.link_type;
      f.data.assign(body.begin() + 20, body.begin() + 20 + cap);
      return f;
    }
    if (type == kNgSimplePacket && body.size() >= 4) {
      const std::uint32_t orig = u32(body.data());
      const std::size_t cap =
          std::min<std::size_t>(orig, body.size() - 4);
      const Interface itf = interfaces_.empty() ? Interface{} : interfaces_[0];
      Frame f;
      f.timestamp_ns = 0;  // simple packet blocks carry no timestamp
      f.original_length = orig;
      f.link_type = itf.link_type;
      f.data.assign(body.begin() + 4, body.begin() + 4 + static_cast<long>(cap));
      return f;
    }
    // Statistics, name resolution and custom blocks are ignored.
  }
}

PcapWriter::PcapWriter(const std::filesystem::path& path,
                       std::uint32_t link_type, std::uint32_t snaplen)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw DataError("cannot write capture: " + path.string());
  put<std::uint32_t>(out_, kClassicMicros);
  put<std::uint16_t>(out_, 2);
  put<std::uint16_t>(out_, 4);
  put<std::int32_t>(out_, 0);
  put<std::uint32_t>(out_, 0);
  put<std::uint32_t>(out_, snaplen);
  put<std::uint32_t>(out_, link_type);
}

void PcapWriter::write(std::int64_t timestamp_ns,
                       std::span<const std::uint8_t> data,
                       std::uint32_t original_length) {
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(timestamp_ns / 1'000'000'000));
  put<std::uint32_t>(out_,
                     static_cast<std::uint32_t>((timestamp_ns % 1'000'000'000) / 1000));
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(data.size()));
  put<std::uint32_t>(out_, original_length);
  out_.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size()));
}

PcapngWriter::PcapngWriter(const std::filesystem::path& path,
                           std::uint32_t link_type)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw DataError("cannot write capture: " + path.string());
  // Section header block without options.
  put<std::uint32_t>(out_, kNgSectionHeader);
  put<std::uint32_t>(out_, 28);
  put<std::uint32_t>(out_, kNgByteOrderMagic);
  put<std::uint16_t>(out_, 1);
  put<std::uint16_t>(out_, 0);
  put<std::int64_t>(out_, -1);
  put<std::uint32_t>(out_, 28);
  // Interface description block with if_tsresol = 9 (nanoseconds).
  put<std::uint32_t>(out_, kNgInterfaceDesc);
  put<std::uint32_t>(out_, 32);
  put<std::uint16_t>(out_, static_cast<std::uint16_t>(link_type));
  put<std::uint16_t>(out_, 0);
  put<std::uint32_t>(out_, 262144);
  put<std::uint16_t>(out_, 9);
  put<std::uint16_t>(out_, 1);
  put<std::uint8_t>(out_, 9);
  put<std::uint8_t>(out_, 0);
  put<std::uint16_t>(out_, 0);
  put<std::uint16_t>(out_, 0);  // opt_endofopt
  put<std::uint16_t>(out_, 0);
  put<std::uint32_t>(out_, 32);
}

void PcapngWriter::write(std::int64_t timestamp_ns,
                         std::span<const std::uint8_t> data,
                         std::uint32_t original_length) {
  const auto cap = static_cast<std::uint32_t>(data.size());
  const std::uint32_t padded = (cap + 3u) & ~3u;
  const std::uint32_t total = 32 + padded;
  const auto ts = static_cast<std::uint64_t>(timestamp_ns);
  put<std::uint32_t>(out_, kNgEnhancedPacket);
  put<std::uint32_t>(out_, total);
  put<std::uint32_t>(out_, 0);
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(ts >> 32));
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(ts));
  put<std::uint32_t>(out_, cap);
  put<std::uint32_t>(out_, original_length);
  out_.write(reinterpret_cast<const char*>(data.data()), cap);
  for (std::uint32_t i = cap; i < padded; ++i) put<std::uint8_t>(out_, 0);
  put<std::uint32_t>(out_, total);
}

}  // namespace ctxflow
