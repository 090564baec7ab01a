#ifndef RSGCIR_LOG_HPP
#define RSGCIR_LOG_HPP

#include <memory>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace rsgcir {

/// Library-wide logger writing to stderr. Default level is `warn`.
inline std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("rsgcir");
    if (existing) return existing;
    auto made = spdlog::stderr_color_mt("rsgcir");
    made->set_level(spdlog::level::warn);
    made->set_pattern("[%l] %v");
    return made;
  }();
  return instance;
}

}  // namespace rsgcir

#endif  // RSGCIR_LOG_HPP
