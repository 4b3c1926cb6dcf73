#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ctxflow {

struct UrlRecord {
  std::string url;         // host + target as observed, e.g. "a.com/x/y.exe?q=1"
  std::string fqdn_or_ip;  // authority without port
  int path_depth = 0;      // directory segments, the filename excluded
  std::optional<std::string> filename;
  std::optional<std::string> extension;  // lower case, without the dot
  int n_params = 0;     // '&'-separated query items
  int n_values = 0;     // query items with a non-empty value after '='
  int n_fragments = 0;  // non-empty '#'-separated fragment parts
  bool has_encoded = false;  // contains a %XX escape
  bool has_query = false;
  int raw_length = 0;

  bool operator==(const UrlRecord&) const = default;
};

// Parses "host[:port]/dir/file.ext?k=v&k2#frag". A scheme prefix is
// tolerated and stripped. The last path segment is a filename only when the
// path does not end in '/' and the segment contains a '.'.
UrlRecord parse_url(std::string_view url);

}  // namespace ctxflow
