#include "macflow/program.hpp"

#include <algorithm>
#include <stdexcept>

namespace macflow {

VariableLayout::VariableLayout(const ScenarioConfig& cfg) {
  knots_ = static_cast<std::size_t>(cfg.knot_count) + 1;
  const int n_nodes = cfg.node_count();
  links_.resize(static_cast<std::size_t>(n_nodes));
  node_base_.resize(static_cast<std::size_t>(n_nodes));

  std::size_t base = 0;
  for (int node = 1; node <= n_nodes; ++node) {
    auto& links = links_[static_cast<std::size_t>(node - 1)];
    for (const Link& l : cfg.links_from(node)) links.push_back(l.to);
    std::sort(links.begin(), links.end());
    node_base_[static_cast<std::size_t>(node - 1)] = base;
    base += (2 * links.size() + 3) * knots_;
  }

  refs_.resize(base);
  for (int node = 1; node <= n_nodes; ++node) {
    const auto& links = links_[static_cast<std::size_t>(node - 1)];
    std::size_t offset = node_base_[static_cast<std::size_t>(node - 1)];
    auto fill = [&](Quantity kind, int link_to) {
      for (std::size_t k = 0; k < knots_; ++k) {
        refs_[offset++] = {node, kind, link_to, static_cast<int>(k)};
      }
    };
    for (int to : links) fill(Quantity::link_power, to);
    for (int to : links) fill(Quantity::link_rate, to);
    fill(Quantity::buffer, -1);
    fill(Quantity::position, -1);
    fill(Quantity::speed, -1);
  }
}

std::size_t VariableLayout::index(int node, Quantity kind, int knot, int link_to) const {
  const auto& links = links_[static_cast<std::size_t>(node - 1)];
  const std::size_t L = links.size();
  std::size_t block = 0;
  switch (kind) {
    case Quantity::link_power:
    case Quantity::link_rate: {
      const auto it = std::find(links.begin(), links.end(), link_to);
      if (it == links.end()) {
        throw std::out_of_range("node " + std::to_string(node) + " has no link to " +
                                std::to_string(link_to));
      }
      block = static_cast<std::size_t>(it - links.begin());
      if (kind == Quantity::link_rate) block += L;
      break;
    }
    case Quantity::buffer:
      block = 2 * L;
      break;
    case Quantity::position:
      block = 2 * L + 1;
      break;
    case Quantity::speed:
      block = 2 * L + 2;
      break;
  }
  return node_base_[static_cast<std::size_t>(node - 1)] + block * knots_ +
         static_cast<std::size_t>(knot);
}

}  // namespace macflow
