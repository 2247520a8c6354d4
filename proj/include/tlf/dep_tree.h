#pragma once

#include <span>
#include <string>
#include <vector>

#include "tlf/corpus_io.h"

namespace tlf::tree {

struct Node {
  std::string form;
  std::string upos;
  std::string deprel;
  int parent = corpus::kRoot;
  // Dependents in emission order; each stands for its whole subtree.
  std::vector<int> dependents;
  // Number of dependents emitted before the node itself.
  size_t head_slot = 0;
};

struct NodeOrder {
  std::vector<int> dependents;
  size_t head_slot = 0;
};

// Node i is token i of the source sentence, so the original surface position
// of node i is i.
class DepTree {
 public:
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
  int root() const { return root_; }
  size_t size() const { return nodes_.size(); }

  // Copy with replaced per-node emission orders. Each order must permute
  // that node's dependents; head_slot must not exceed their count.
  DepTree with_orders(std::vector<NodeOrder> orders) const;

 private:
  friend DepTree build_tree(const corpus::ParsedSentence& sentence);

  std::vector<Node> nodes_;
  int root_ = 0;
};

// Children ordered by original surface position. Throws on cycles.
DepTree build_tree(const corpus::ParsedSentence& sentence);

// Every subtree covers a contiguous interval of original positions.
bool is_projective(const DepTree& tree);
// Same check where node i sits at position_of[i].
bool is_projective(const DepTree& tree, std::span<const int> position_of);

// Node indices in emission order (depth-first, each node in its head slot).
std::vector<int> linearize_nodes(const DepTree& tree);
std::vector<std::string> linearize(const DepTree& tree);

// Inverse of an emission order: position_of[node] = index in `emission`.
std::vector<int> positions_of(std::span<const int> emission);

}  // namespace tlf::tree
