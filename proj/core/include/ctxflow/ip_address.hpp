#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace ctxflow {

// IPv4 or IPv6 address stored in network byte order. IPv4 addresses use the
// first four bytes; the remaining bytes stay zero so comparisons are total.
class IpAddress {
 public:
  IpAddress() = default;

  static IpAddress v4(std::uint32_t host_order);
  static IpAddress v4(std::span<const std::uint8_t, 4> bytes);
  static IpAddress v6(std::span<const std::uint8_t, 16> bytes);
  static std::optional<IpAddress> parse(std::string_view text);

  bool is_v6() const { return v6_; }
  std::span<const std::uint8_t> bytes() const {
    return {bytes_.data(), v6_ ? 16u : 4u};
  }
  std::uint32_t v4_host_order() const;
  std::string to_string() const;

  friend auto operator<=>(const IpAddress&, const IpAddress&) = default;
  friend bool operator==(const IpAddress&, const IpAddress&) = default;

 private:
  bool v6_ = false;
  std::array<std::uint8_t, 16> bytes_{};
};

struct IpAddressHash {
  std::size_t operator()(const IpAddress& ip) const noexcept;
};

}  // namespace ctxflow
