#pragma once

#include <functional>
#include <iostream>
#include <string_view>

namespace qtyp {

using LogSink = std::function<void(std::string_view)>;

/// Destination for warnings emitted by the library. Defaults to std::clog.
inline LogSink& warning_sink() {
  static LogSink sink = [](std::string_view msg) { std::clog << "warning: " << msg << '\n'; };
  return sink;
}

inline void warn(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace qtyp
