#pragma once

#include <sstream>
#include <string>

namespace gadan::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Current level, initialized once from GADAN_LOG_LEVEL (error|warn|info|debug).
Level level();
void set_level(Level lv);
void write(Level lv, const std::string& msg);

}  // namespace gadan::log

#define GADAN_LOG(lv, expr)                                      \
    do {                                                         \
        if (static_cast<int>(lv) <= static_cast<int>(::gadan::log::level())) { \
            std::ostringstream os_;                              \
            os_ << expr;                                         \
            ::gadan::log::write(lv, os_.str());                  \
        }                                                        \
    } while (0)

#define GADAN_ERROR(expr) GADAN_LOG(::gadan::log::Level::error, expr)
#define GADAN_WARN(expr) GADAN_LOG(::gadan::log::Level::warn, expr)
#define GADAN_INFO(expr) GADAN_LOG(::gadan::log::Level::info, expr)
#define GADAN_DEBUG(expr) GADAN_LOG(::gadan::log::Level::debug, expr)
