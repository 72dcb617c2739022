#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <doctest.h>

#include "common/error.hpp"
#include "dpcore/gaussian.hpp"
#include "traces/stream.hpp"

namespace nstest {

using netshaper::Bytes;
using netshaper::ErrorKind;
using netshaper::Nanos;

// Runs `expr` and checks that it throws netshaper::Error of the given kind.
#define CHECK_THROWS_KIND(expr, kind_)                         \
  do {                                                         \
    bool thrown_ = false;                                      \
    try {                                                      \
      (void)(expr);                                            \
    } catch (const netshaper::Error& e_) {                     \
      thrown_ = true;                                          \
      CHECK_MESSAGE(e_.kind() == (kind_), e_.what());          \
    }                                                          \
    CHECK_MESSAGE(thrown_, "expected an exception: " #expr);   \
  } while (0)

// Random packet stream with `n` records in [0, horizon).
inline netshaper::traces::Stream random_stream(std::mt19937_64& rng, std::size_t n, Nanos horizon,
                                               Bytes max_len, netshaper::FlowId flow = 1) {
  std::uniform_int_distribution<Nanos> t(0, horizon - 1);
  std::uniform_int_distribution<Bytes> len(1, max_len);
  std::vector<netshaper::traces::PacketRecord> recs;
  recs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) recs.push_back({t(rng), len(rng), flow, netshaper::traces::Direction::Outbound});
  return netshaper::traces::Stream(std::move(recs));
}

// Replays a fixed list of draws (in bytes), then zeros.
class ScriptedNoise final : public netshaper::dpcore::NoiseSource {
 public:
  explicit ScriptedNoise(std::vector<double> draws) : draws_(std::move(draws)) {}
  double gaussian(double) override { return next_ < draws_.size() ? draws_[next_++] : 0.0; }

 private:
  std::vector<double> draws_;
  std::size_t next_ = 0;
};

// Records every draw of an inner source so a second shaper can replay it.
class Recorder final : public netshaper::dpcore::NoiseSource {
 public:
  explicit Recorder(netshaper::dpcore::NoiseSource& inner) : inner_(inner) {}
  double gaussian(double sigma) override {
    double z = inner_.gaussian(sigma);
    draws.push_back(z);
    return z;
  }
  std::vector<double> draws;

 private:
  netshaper::dpcore::NoiseSource& inner_;
};

}  // namespace nstest
