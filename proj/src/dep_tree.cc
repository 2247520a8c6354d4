#include "tlf/dep_tree.h"

#include <algorithm>

#include "tlf/common.h"

namespace tlf::tree {

using corpus::kRoot;

DepTree build_tree(const corpus::ParsedSentence& sentence) {
  corpus::validate_sentence(sentence);
  const int n = static_cast<int>(sentence.tokens.size());

  // 0 = unvisited, 1 = on current path, 2 = reaches root.
  std::vector<int> state(n, 0);
  for (int start = 0; start < n; ++start) {
    std::vector<int> path;
    int cur = start;
    while (cur != kRoot && state[cur] == 0) {
      state[cur] = 1;
      path.push_back(cur);
      cur = sentence.tokens[cur].head;
    }
    if (cur != kRoot && state[cur] == 1) {
      auto it = std::find(path.begin(), path.end(), cur);
      std::string ids;
      for (; it != path.end(); ++it) ids += (ids.empty() ? "" : " ") + std::to_string(*it + 1);
      throw Error("sentence " + sentence.sent_id + ": cycle among tokens " + ids);
    }
    for (int p : path) state[p] = 2;
  }

  DepTree tree;
  tree.nodes_.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& t = sentence.tokens[i];
    Node& node = tree.nodes_[i];
    node.form = t.form;
    node.upos = t.upos;
    node.deprel = t.deprel;
    node.parent = t.head;
    if (t.head == kRoot) tree.root_ = i;
  }
  // Ascending i keeps every dependents list sorted by surface position.
  for (int i = 0; i < n; ++i) {
    int h = tree.nodes_[i].parent;
    if (h != kRoot) {
      Node& head = tree.nodes_[h];
      head.dependents.push_back(i);
      if (i < h) head.head_slot = head.dependents.size();
    }
  }
  return tree;
}

DepTree DepTree::with_orders(std::vector<NodeOrder> orders) const {
  if (orders.size() != nodes_.size()) throw Error("with_orders: one order per node required");
  DepTree out = *this;
  for (size_t i = 0; i < orders.size(); ++i) {
    auto expected = nodes_[i].dependents;
    auto given = orders[i].dependents;
    std::sort(expected.begin(), expected.end());
    std::sort(given.begin(), given.end());
    if (expected != given || orders[i].head_slot > given.size())
      throw Error("with_orders: order for node " + std::to_string(i + 1) +
                  " is not a permutation of its dependents");
    out.nodes_[i].dependents = std::move(orders[i].dependents);
    out.nodes_[i].head_slot = orders[i].head_slot;
  }
  return out;
}

std::vector<int> linearize_nodes(const DepTree& tree) {
  std::vector<int> out;
  out.reserve(tree.size());
  if (tree.size() == 0) return out;
  // (node, slot): slot k < dependents.size() visits dependent k after
  // emitting the head when k == head_slot; slot == size emits a trailing head.
  std::vector<std::pair<int, size_t>> stack{{tree.root(), 0}};
  while (!stack.empty()) {
    auto& [v, slot] = stack.back();
    const Node& node = tree.node(v);
    if (slot == node.head_slot) out.push_back(v);
    if (slot == node.dependents.size()) {
      stack.pop_back();
      continue;
    }
    int child = node.dependents[slot++];
    stack.emplace_back(child, 0);
  }
  return out;
}

std::vector<std::string> linearize(const DepTree& tree) {
  std::vector<std::string> out;
  out.reserve(tree.size());
  for (int i : linearize_nodes(tree)) out.push_back(tree.node(i).form);
  return out;
}

std::vector<int> positions_of(std::span<const int> emission) {
  std::vector<int> pos(emission.size());
  for (size_t k = 0; k < emission.size(); ++k) pos[static_cast<size_t>(emission[k])] = static_cast<int>(k);
  return pos;
}

bool is_projective(const DepTree& tree, std::span<const int> position_of) {
  const size_t n = tree.size();
  std::vector<int> lo(n), hi(n), count(n, 1);
  for (size_t i = 0; i < n; ++i) lo[i] = hi[i] = position_of[i];
  std::vector<int> discovery;
  discovery.reserve(n);
  std::vector<int> stack{tree.root()};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    discovery.push_back(v);
    for (int c : tree.node(v).dependents) stack.push_back(c);
  }
  // Reverse discovery order visits every child before its parent.
  for (auto it = discovery.rbegin(); it != discovery.rend(); ++it) {
    int v = *it;
    if (hi[v] - lo[v] + 1 != count[v]) return false;
    int p = tree.node(v).parent;
    if (p != kRoot) {
      lo[p] = std::min(lo[p], lo[v]);
      hi[p] = std::max(hi[p], hi[v]);
      count[p] += count[v];
    }
  }
  return true;
}

bool is_projective(const DepTree& tree) {
  std::vector<int> identity(tree.size());
  for (size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<int>(i);
  return is_projective(tree, identity);
}

}  // namespace tlf::tree
