#include "core/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace gadan::log {

namespace {

Level g_level = Level::warn;
std::once_flag g_init;
std::mutex g_mutex;

Level parse_env() {
    const char* env = std::getenv("GADAN_LOG_LEVEL");
    if (!env) return Level::warn;
    std::string s(env);
    if (s == "error") return Level::error;
    if (s == "warn") return Level::warn;
    if (s == "info") return Level::info;
    if (s == "debug") return Level::debug;
    return Level::warn;
}

const char* name(Level lv) {
    switch (lv) {
        case Level::error: return "error";
        case Level::warn: return "warn";
        case Level::info: return "info";
        case Level::debug: return "debug";
    }
    return "?";
}

}  // namespace

Level level() {
    std::call_once(g_init, [] { g_level = parse_env(); });
    return g_level;
}

void set_level(Level lv) {
    level();
    g_level = lv;
}

void write(Level lv, const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_mutex);
    std::cerr << "[gadan:" << name(lv) << "] " << msg << "\n";
}

}  // namespace gadan::log
