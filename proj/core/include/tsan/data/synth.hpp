#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tsan/data/nslkdd.hpp"

namespace tsan::data {

// Generates NSL-KDD-schema records for tests and demos when the real files
// are absent. Labels come in bursts (runs of 1-8 records of one class) with
// exactly round(n * dos_fraction) DoS records. DoS rows draw "count",
// "srv_count" and the error rates from a high regime; normal rows from a low
// one, so "count" and "serror_rate" separate the classes linearly.
std::vector<RawRecord> synth_generate(std::size_t n, double dos_fraction, std::uint64_t seed);

}  // namespace tsan::data
