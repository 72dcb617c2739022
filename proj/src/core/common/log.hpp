#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace netshaper {

// Shared stderr logger. Level comes from NETSHAPER_LOG
// (error|warn|info|debug|trace), default warn.
std::shared_ptr<spdlog::logger> logger();

}  // namespace netshaper
