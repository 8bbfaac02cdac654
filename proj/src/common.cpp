#include "aggsim/common.hpp"

#include <charconv>
#include <numeric>

namespace aggsim {

std::string Ratio::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

namespace {

std::int64_t parse_int(const std::string& text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("not an integer: '" + text + "'");
  }
  return v;
}

}  // namespace

Ratio Ratio::parse(const std::string& text) {
  Ratio r;
  if (auto slash = text.find('/'); slash != std::string::npos) {
    r.num = parse_int(text.substr(0, slash));
    r.den = parse_int(text.substr(slash + 1));
  } else if (auto dot = text.find('.'); dot != std::string::npos) {
    std::string frac = text.substr(dot + 1);
    if (frac.size() > 15) throw ValidationError("too many decimals: '" + text + "'");
    std::int64_t den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    std::string whole = text.substr(0, dot);
    r.num = parse_int((whole.empty() ? std::string("0") : whole) + frac);
    r.den = den;
  } else {
    r.num = parse_int(text);
  }
  if (!r.valid()) throw ValidationError("invalid ratio: '" + text + "'");
  auto g = std::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

}  // namespace aggsim
