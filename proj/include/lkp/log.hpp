#pragma once

#include <string_view>

namespace lkp {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3, silent = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_info(std::string_view msg);
void log_warning(std::string_view msg);
void log_error(std::string_view msg);

} // namespace lkp
