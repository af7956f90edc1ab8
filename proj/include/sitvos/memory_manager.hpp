#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sitvos/errors.hpp"

namespace sitvos {

// Which past frames feed the memory when segmenting frame t.
struct MemoryPolicy {
  enum class Kind { FirstOnly, PreviousOnly, FirstAndPrevious, EveryK, FixedN };

  Kind kind = Kind::FixedN;
  int k = 12;  // EveryK interval
  int n = 7;   // FixedN capacity

  static MemoryPolicy first_only() { return {Kind::FirstOnly, 0, 0}; }
  static MemoryPolicy previous_only() { return {Kind::PreviousOnly, 0, 0}; }
  static MemoryPolicy first_and_previous() { return {Kind::FirstAndPrevious, 0, 0}; }
  static MemoryPolicy every_k(int k) {
    if (k < 1) throw ContractError("memory policy: every-k interval must be >= 1");
    return {Kind::EveryK, k, 0};
  }
  static MemoryPolicy fixed_n(int n) {
    if (n < 2) throw ContractError("memory policy: fixed-n capacity must be >= 2");
    return {Kind::FixedN, 0, n};
  }

  // CLI syntax: first | prev | first-prev | every-k:K | fixed-n:N
  static MemoryPolicy parse(const std::string& s) {
    if (s == "first") return first_only();
    if (s == "prev") return previous_only();
    if (s == "first-prev") return first_and_previous();
    if (s.rfind("every-k:", 0) == 0) return every_k(std::stoi(s.substr(8)));
    if (s.rfind("fixed-n:", 0) == 0) return fixed_n(std::stoi(s.substr(8)));
    throw FormatError("unknown memory policy '" + s + "'");
  }

  std::string str() const {
    switch (kind) {
      case Kind::FirstOnly: return "first";
      case Kind::PreviousOnly: return "prev";
      case Kind::FirstAndPrevious: return "first-prev";
      case Kind::EveryK: return "every-k:" + std::to_string(k);
      case Kind::FixedN: return "fixed-n:" + std::to_string(n);
    }
    return "?";
  }
};

// Strictly increasing, duplicate-free frame indices in [0, t-1].
inline std::vector<int> select(int t, const MemoryPolicy& policy) {
  if (t < 1) throw ContractError("select: t must be >= 1 (frame 0 is the annotated frame)");
  std::vector<int> out;
  switch (policy.kind) {
    case MemoryPolicy::Kind::FirstOnly:
      out = {0};
      break;
    case MemoryPolicy::Kind::PreviousOnly:
      out = {t - 1};
      break;
    case MemoryPolicy::Kind::FirstAndPrevious:
      out = {0, t - 1};
      break;
    case MemoryPolicy::Kind::EveryK: {
      out.push_back(0);
      for (int i = policy.k; i <= t - 1; i += policy.k) out.push_back(i);
      out.push_back(t - 1);
      break;
    }
    case MemoryPolicy::Kind::FixedN: {
      if (t <= policy.n) {
        for (int i = 0; i < t; ++i) out.push_back(i);
      } else {
        // Evenly spaced over [0, t-1], endpoints always included.
        for (int i = 0; i < policy.n; ++i) {
          const double pos = static_cast<double>(i) * (t - 1) / (policy.n - 1);
          out.push_back(static_cast<int>(std::lround(pos)));
        }
      }
      break;
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace sitvos
