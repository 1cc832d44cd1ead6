#pragma once

#include <string>
#include <string_view>

#include "forge/error.hpp"

namespace forge::detail {

// "http://host:port/prefix" -> {"http://host:port", "/prefix"}.
struct SplitUrl {
  std::string origin;
  std::string path_prefix;
};

inline SplitUrl split_url(std::string_view url) {
  auto scheme = url.find("://");
  if (scheme == std::string_view::npos) {
    throw Error(ErrorKind::validation, "URL '" + std::string(url) + "' has no scheme");
  }
  auto proto = url.substr(0, scheme);
  if (proto != "http" && proto != "https") {
    throw Error(ErrorKind::validation, "unsupported URL scheme in '" + std::string(url) + "'");
  }
  auto slash = url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = std::string(url.substr(0, slash));
  if (slash != std::string_view::npos) out.path_prefix = std::string(url.substr(slash));
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

}  // namespace forge::detail
