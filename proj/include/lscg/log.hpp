#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace lscg::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

namespace detail {
inline std::atomic<Level>& level() {
  static std::atomic<Level> l{Level::info};
  return l;
}
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
inline std::function<void(Level, const std::string&)>& sink() {
  static std::function<void(Level, const std::string&)> s;
  return s;
}
}  // namespace detail

inline void set_level(Level l) { detail::level() = l; }

/// Redirects messages (tests use this to capture warnings). Pass {} to restore stderr.
inline void set_sink(std::function<void(Level, const std::string&)> s) {
  std::lock_guard lock(detail::mutex());
  detail::sink() = std::move(s);
}

inline void write(Level l, const std::string& msg) {
  if (l < detail::level().load()) return;
  std::lock_guard lock(detail::mutex());
  if (detail::sink()) {
    detail::sink()(l, msg);
    return;
  }
  static const char* names[] = {"debug", "info", "warning", "error"};
  std::cerr << "[lscg " << names[static_cast<int>(l)] << "] " << msg << '\n';
}

inline void debug(const std::string& m) { write(Level::debug, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }
inline void error(const std::string& m) { write(Level::error, m); }

}  // namespace lscg::log
