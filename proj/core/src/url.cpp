#include "ctxflow/url.hpp"

#include <cctype>

namespace ctxflow {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool has_percent_escape(std::string_view s) {
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    if (s[i] == '%' && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      return true;
    }
  }
  return false;
}

template <typename F>
void split(std::string_view s, char sep, F&& fn) {
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    fn(s.substr(start, end - start));
    start = end + 1;
  }
}

}  // namespace

UrlRecord parse_url(std::string_view url) {
  if (auto scheme = url.find("://");
      scheme != std::string_view::npos && scheme < url.find('/')) {
    url.remove_prefix(scheme + 3);
  }
  UrlRecord r;
  r.url = std::string(url);
  r.raw_length = static_cast<int>(url.size());
  r.has_encoded = has_percent_escape(url);

  const std::size_t auth_end = url.find_first_of("/?#");
  std::string_view authority = url.substr(0, auth_end);
  if (auto at = authority.rfind('@'); at != std::string_view::npos) {
    authority.remove_prefix(at + 1);
  }
  if (!authority.empty() && authority.front() == '[') {
    const std::size_t close = authority.find(']');
    authority = authority.substr(1, close == std::string_view::npos ? authority.size() - 1
                                                                    : close - 1);
  } else if (auto colon = authority.find(':'); colon != std::string_view::npos) {
    authority = authority.substr(0, colon);
  }
  r.fqdn_or_ip = lower(authority);

  std::string_view rest = auth_end == std::string_view::npos ? std::string_view{}
                                                             : url.substr(auth_end);
  std::string_view fragment;
  if (auto hash = rest.find('#'); hash != std::string_view::npos) {
    fragment = rest.substr(hash + 1);
    rest = rest.substr(0, hash);
    split(fragment, '#', [&](std::string_view part) {
      if (!part.empty()) ++r.n_fragments;
    });
  }
  std::string_view path = rest;
  if (auto q = rest.find('?'); q != std::string_view::npos) {
    r.has_query = true;
    path = rest.substr(0, q);
    split(rest.substr(q + 1), '&', [&](std::string_view item) {
      if (item.empty()) return;
      ++r.n_params;
      const std::size_t eq = item.find('=');
      if (eq != std::string_view::npos && eq + 1 < item.size()) ++r.n_values;
    });
  }

  int segments = 0;
  std::string_view last;
  split(path, '/', [&](std::string_view seg) {
    if (seg.empty()) return;
    ++segments;
    last = seg;
  });
  const bool trailing_slash = !path.empty() && path.back() == '/';
  if (segments > 0 && !trailing_slash && last.find('.') != std::string_view::npos) {
    r.filename = std::string(last);
    r.path_depth = segments - 1;
    const std::size_t dot = last.rfind('.');
    if (dot + 1 < last.size()) r.extension = lower(last.substr(dot + 1));
  } else {
    r.path_depth = segments;
  }
  return r;
}

}  // namespace ctxflow
