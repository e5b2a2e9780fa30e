#pragma once

// Brute-force reference for chain_events: enumerate every connected photon
// subset of the pair graph by depth-first growth, keep those of size >= 3 that
// no outside photon touches.

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "qknit/correlator.hpp"

namespace oracle {

using qknit::CorrelatedEvent;
using qknit::TaggedPhoton;

inline std::vector<CorrelatedEvent> brute_force_chains(const std::vector<CorrelatedEvent>& pairs) {
  std::vector<TaggedPhoton> nodes;
  for (const auto& p : pairs) nodes.insert(nodes.end(), p.photons.begin(), p.photons.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  const std::size_t n = nodes.size();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  auto idx = [&](const TaggedPhoton& t) {
    return static_cast<std::size_t>(std::find(nodes.begin(), nodes.end(), t) - nodes.begin());
  };
  for (const auto& p : pairs) {
    const auto a = idx(p.photons[0]), b = idx(p.photons[1]);
    adj[a][b] = adj[b][a] = true;
  }

  std::set<std::vector<std::size_t>> seen, found;
  std::vector<std::vector<std::size_t>> stack;
  for (std::size_t i = 0; i < n; ++i) stack.push_back({i});
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    std::sort(cur.begin(), cur.end());
    if (!seen.insert(cur).second) continue;
    bool extended = false;
    for (std::size_t v = 0; v < n; ++v) {
      if (std::binary_search(cur.begin(), cur.end(), v)) continue;
      bool touches = false;
      for (auto u : cur) touches = touches || adj[u][v];
      if (!touches) continue;
      extended = true;
      auto next = cur;
      next.push_back(v);
      stack.push_back(next);
    }
    if (!extended && cur.size() >= 3) found.insert(cur);
  }

  std::vector<CorrelatedEvent> out;
  for (const auto& s : found) {
    CorrelatedEvent ev;
    for (auto i : s) ev.photons.push_back(nodes[i]);
    out.push_back(ev);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Toy stream of up to `max_photons` photons on distinct pulses, dense enough
// to produce chains of several lengths.
inline std::vector<TaggedPhoton> random_toy_stream(std::mt19937_64& rng, std::size_t max_photons) {
  std::uniform_int_distribution<std::size_t> count(2, max_photons);
  std::uniform_int_distribution<int> step(1, 5);
  std::uniform_int_distribution<int> det(0, qknit::kDetectors - 1);
  std::uniform_int_distribution<std::uint32_t> delay(0, 400);
  const std::size_t k = count(rng);
  std::vector<TaggedPhoton> out;
  std::uint64_t pulse = std::uniform_int_distribution<std::uint64_t>(0, 10)(rng);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({pulse, static_cast<std::uint8_t>(det(rng)), delay(rng)});
    pulse += static_cast<std::uint64_t>(step(rng));
  }
  return out;
}

}  // namespace oracle
