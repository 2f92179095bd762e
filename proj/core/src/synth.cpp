#include "tsan/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tsan/errors.hpp"

namespace tsan::data {
namespace {

struct Generator {
  std::mt19937_64 rng;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  double rate(double lo, double hi) { return std::round(uniform(lo, hi) * 100.0) / 100.0; }

  template <typename C>
  const auto& pick(const C& options) {
    return options[static_cast<std::size_t>(integer(0, static_cast<long>(options.size()) - 1))];
  }
};

void set(RawRecord& r, std::string_view name, double value) { r.numeric[numeric_index(name)] = value; }

RawRecord normal_record(Generator& g) {
  RawRecord r;
  const double p = g.uniform(0.0, 1.0);
  if (p < 0.7) {
    r.protocol = "tcp";
    r.service = g.pick(std::array<const char*, 5>{"http", "smtp", "ftp_data", "telnet", "ftp"});
    r.flag = g.chance(0.9) ? "SF" : g.pick(std::array<const char*, 3>{"REJ", "RSTO", "S1"});
    set(r, "logged_in", g.chance(0.85) ? 1 : 0);
  } else if (p < 0.9) {
    r.protocol = "udp";
    r.service = g.pick(std::array<const char*, 3>{"domain_u", "private", "ntp_u"});
    r.flag = "SF";
  } else {
    r.protocol = "icmp";
    r.service = g.pick(std::array<const char*, 2>{"eco_i", "ecr_i"});
    r.flag = "SF";
  }
  r.label = "normal";
  r.difficulty = static_cast<int>(g.integer(15, 21));
  const double count = static_cast<double>(g.integer(1, 60));
  set(r, "duration", g.chance(0.8) ? 0 : static_cast<double>(g.integer(1, 300)));
  set(r, "src_bytes", static_cast<double>(g.integer(100, 5000)));
  set(r, "dst_bytes", static_cast<double>(g.integer(0, 20000)));
  set(r, "hot", g.chance(0.1) ? static_cast<double>(g.integer(1, 3)) : 0);
  set(r, "count", count);
  set(r, "srv_count", static_cast<double>(g.integer(1, static_cast<long>(count))));
  set(r, "serror_rate", g.rate(0.0, 0.1));
  set(r, "srv_serror_rate", g.rate(0.0, 0.1));
  set(r, "rerror_rate", g.rate(0.0, 0.1));
  set(r, "srv_rerror_rate", g.rate(0.0, 0.1));
  set(r, "same_srv_rate", g.rate(0.7, 1.0));
  set(r, "diff_srv_rate", g.rate(0.0, 0.2));
  set(r, "srv_diff_host_rate", g.rate(0.0, 0.3));
  set(r, "dst_host_count", static_cast<double>(g.integer(1, 255)));
  set(r, "dst_host_srv_count", static_cast<double>(g.integer(50, 255)));
  set(r, "dst_host_same_srv_rate", g.rate(0.5, 1.0));
  set(r, "dst_host_diff_srv_rate", g.rate(0.0, 0.1));
  set(r, "dst_host_same_src_port_rate", g.rate(0.0, 0.3));
  set(r, "dst_host_srv_diff_host_rate", g.rate(0.0, 0.1));
  set(r, "dst_host_serror_rate", g.rate(0.0, 0.1));
  set(r, "dst_host_srv_serror_rate", g.rate(0.0, 0.1));
  set(r, "dst_host_rerror_rate", g.rate(0.0, 0.1));
  set(r, "dst_host_srv_rerror_rate", g.rate(0.0, 0.1));
  return r;
}

RawRecord dos_record(Generator& g) {
  RawRecord r;
  r.difficulty = static_cast<int>(g.integer(15, 21));
  const double count = static_cast<double>(g.integer(100, 511));
  set(r, "count", count);
  set(r, "dst_host_count", 255);
  set(r, "dst_host_srv_count", static_cast<double>(g.integer(1, 40)));
  set(r, "dst_host_same_srv_rate", g.rate(0.0, 0.2));
  set(r, "dst_host_diff_srv_rate", g.rate(0.0, 0.1));
  set(r, "same_srv_rate", g.rate(0.0, 0.2));
  set(r, "diff_srv_rate", g.rate(0.0, 0.1));
  const double variant = g.uniform(0.0, 1.0);
  if (variant < 0.55) {
    r.label = "neptune";
    r.protocol = "tcp";
    r.service = g.pick(std::array<const char*, 4>{"private", "http", "telnet", "ftp"});
    r.flag = g.chance(0.85) ? "S0" : "REJ";
    set(r, "srv_count", static_cast<double>(g.integer(1, 30)));
    const double serror = r.flag == "S0" ? g.rate(0.9, 1.0) : g.rate(0.0, 0.1);
    const double rerror = r.flag == "S0" ? g.rate(0.0, 0.1) : g.rate(0.9, 1.0);
    set(r, "serror_rate", serror);
    set(r, "srv_serror_rate", serror);
    set(r, "rerror_rate", rerror);
    set(r, "srv_rerror_rate", rerror);
    set(r, "dst_host_serror_rate", serror);
    set(r, "dst_host_srv_serror_rate", serror);
    set(r, "dst_host_rerror_rate", rerror);
    set(r, "dst_host_srv_rerror_rate", rerror);
  } else if (variant < 0.8) {
    r.label = "smurf";
    r.protocol = "icmp";
    r.service = "ecr_i";
    r.flag = "SF";
    set(r, "src_bytes", g.chance(0.5) ? 1032 : 520);
    set(r, "srv_count", count);
    set(r, "same_srv_rate", 1.0);
    set(r, "dst_host_same_srv_rate", 1.0);
    set(r, "dst_host_srv_count", 255);
    set(r, "dst_host_same_src_port_rate", g.rate(0.8, 1.0));
    set(r, "serror_rate", g.rate(0.6, 1.0));
  } else if (variant < 0.88) {
    r.label = "back";
    r.protocol = "tcp";
    r.service = "http";
    r.flag = "SF";
    set(r, "src_bytes", 54540);
    set(r, "dst_bytes", static_cast<double>(g.integer(7000, 8400)));
    set(r, "hot", 2);
    set(r, "logged_in", 1);
    set(r, "srv_count", static_cast<double>(g.integer(1, 30)));
    set(r, "serror_rate", g.rate(0.6, 1.0));
  } else if (variant < 0.95) {
    r.label = "teardrop";
    r.protocol = "udp";
    r.service = "private";
    r.flag = "SF";
    set(r, "src_bytes", 28);
    set(r, "wrong_fragment", 3);
    set(r, "srv_count", static_cast<double>(g.integer(1, 30)));
    set(r, "serror_rate", g.rate(0.6, 1.0));
  } else if (variant < 0.99) {
    r.label = "pod";
    r.protocol = "icmp";
    r.service = "ecr_i";
    r.flag = "SF";
    set(r, "src_bytes", 1480);
    set(r, "wrong_fragment", 1);
    set(r, "srv_count", static_cast<double>(g.integer(1, 30)));
    set(r, "serror_rate", g.rate(0.6, 1.0));
  } else {
    r.label = "land";
    r.protocol = "tcp";
    r.service = g.pick(std::array<const char*, 2>{"finger", "telnet"});
    r.flag = "S0";
    set(r, "land", 1);
    set(r, "srv_count", 1);
    set(r, "serror_rate", 1.0);
    set(r, "srv_serror_rate", 1.0);
  }
  return r;
}

}  // namespace

std::vector<RawRecord> synth_generate(std::size_t n, double dos_fraction, std::uint64_t seed) {
  if (!(dos_fraction >= 0.0 && dos_fraction <= 1.0)) {
    throw ConfigError("dos_fraction must lie in [0, 1], got " + std::to_string(dos_fraction));
  }
  Generator g{std::mt19937_64(seed)};
  std::size_t remaining_dos = static_cast<std::size_t>(std::llround(dos_fraction * static_cast<double>(n)));
  std::size_t remaining_normal = n - remaining_dos;
  std::vector<RawRecord> out;
  out.reserve(n);
  while (remaining_dos + remaining_normal > 0) {
    const double p_dos = static_cast<double>(remaining_dos) / static_cast<double>(remaining_dos + remaining_normal);
    const bool dos = g.uniform(0.0, 1.0) < p_dos;
    std::size_t& remaining = dos ? remaining_dos : remaining_normal;
    const std::size_t run = std::min<std::size_t>(remaining, static_cast<std::size_t>(g.integer(1, 8)));
    for (std::size_t i = 0; i < run; ++i) out.push_back(dos ? dos_record(g) : normal_record(g));
    remaining -= run;
  }
  return out;
}

}  // namespace tsan::data
