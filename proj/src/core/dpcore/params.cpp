#include "dpcore/params.hpp"

#include <cmath>

#include "common/error.hpp"

namespace netshaper::dpcore {

void DpParams::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail(ErrorKind::Validation, "epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::Validation, "delta must be in (0, 1)");
  if (delta_w <= 0) fail(ErrorKind::Validation, "delta_w must be > 0");
  if (T <= 0) fail(ErrorKind::Validation, "T must be > 0");
  if (W <= 0) fail(ErrorKind::Validation, "W must be > 0");
  if (W % T != 0) fail(ErrorKind::Validation, "W must be a multiple of T");
  if (cutoff <= 0) fail(ErrorKind::Validation, "cutoff must be > 0");
}

}  // namespace netshaper::dpcore
