#include "lkp/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace lkp {

namespace {
std::atomic<LogLevel> g_level{LogLevel::warning};
std::mutex g_mutex;

void emit(LogLevel level, std::string_view tag, std::string_view msg) {
    if (level < g_level.load()) return;
    std::lock_guard lock(g_mutex);
    std::cerr << "[lkp " << tag << "] " << msg << '\n';
}
} // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_info(std::string_view msg) { emit(LogLevel::info, "info", msg); }
void log_warning(std::string_view msg) { emit(LogLevel::warning, "warn", msg); }
void log_error(std::string_view msg) { emit(LogLevel::error, "error", msg); }

} // namespace lkp
