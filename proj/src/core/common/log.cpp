#include "common/log.hpp"

#include <cstdlib>
#include <mutex>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace netshaper {

namespace {

spdlog::level::level_enum level_from_env() {
  const char* env = std::getenv("NETSHAPER_LOG");
  if (env == nullptr) return spdlog::level::warn;
  std::string_view v(env);
  if (v == "error") return spdlog::level::err;
  if (v == "warn") return spdlog::level::warn;
  if (v == "info") return spdlog::level::info;
  if (v == "debug") return spdlog::level::debug;
  if (v == "trace") return spdlog::level::trace;
  return spdlog::level::warn;
}

}  // namespace

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> instance;
  std::call_once(once, [] {
    instance = spdlog::stderr_color_mt("netshaper");
    instance->set_level(level_from_env());
    instance->set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");
  });
  return instance;
}

}  // namespace netshaper
