#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "tsm/error.hpp"
#include "tsm/lp.hpp"

namespace tsm {

MeritOrderResult merit_order_clear(std::span<const double> costs, std::span<const double> caps,
                                   double demand) {
  if (costs.size() != caps.size()) {
    throw Error(ErrorCode::InvalidParams, "costs and caps differ in length");
  }
  double total = 0.0;
  for (double c : caps) {
    if (c < 0) throw Error(ErrorCode::NegativeCapacity, fmt::format("capacity {}", c));
    total += c;
  }
  if (demand < 0 || demand > total * (1.0 + 1e-12) + 1e-12) {
    throw Error(ErrorCode::InfeasibleDemand,
                fmt::format("demand {} outside [0, {}]", demand, total));
  }

  MeritOrderResult out;
  out.dispatch.assign(costs.size(), 0.0);
  std::vector<std::size_t> order(costs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });

  double remaining = demand;
  for (std::size_t k : order) {
    if (remaining <= 0.0) break;
    if (caps[k] <= 0.0) continue;
    const double take = std::min(caps[k], remaining);
    out.dispatch[k] = take;
    remaining -= take;
    out.price = costs[k];
    out.marginal = static_cast<int>(k);
  }
  return out;
}

}  // namespace tsm
