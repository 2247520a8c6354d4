#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tlf/corpus_io.h"
#include "tlf/dep_tree.h"

namespace tlf::reorder {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Token-level transforms

std::vector<std::string> reverse_tokens(std::vector<std::string> tokens);

// Fisher-Yates over a SplitMix64 stream seeded with `record_seed`.
std::vector<std::string> shuffle_tokens(std::vector<std::string> tokens, uint64_t record_seed);

// ---------------------------------------------------------------------------
// Ordering statistics

struct OrderStat {
  double p_before = 0.0;       // fraction of dependents preceding the head
  double mean_position = 0.0;  // mean (subtree center - head position) / sentence length
  int64_t count = 0;

  bool operator==(const OrderStat&) const = default;
};

enum class PosClass { kNoun, kVerb };

// NOUN/PROPN -> N, VERB -> V; everything else (AUX included) has no class.
std::optional<PosClass> pos_class(const std::string& upos);
std::string pos_class_name(PosClass c);

// Keyed by (head UPOS, dependent relation).
class OrderingModel {
 public:
  using Key = std::pair<std::string, std::string>;

  OrderingModel() = default;
  explicit OrderingModel(std::string language_tag) : language_tag_(std::move(language_tag)) {}

  const std::string& language_tag() const { return language_tag_; }
  const std::map<Key, OrderStat>& entries() const { return entries_; }

  std::optional<OrderStat> lookup(const std::string& head_upos, const std::string& deprel) const;
  // Exact relation first, then its universal part ("nmod:poss" -> "nmod").
  std::optional<OrderStat> lookup_with_fallback(const std::string& head_upos,
                                                const std::string& deprel) const;

  // Validates ranges: p_before in [0,1], mean_position in [-1,1], count >= 1.
  void set(const std::string& head_upos, const std::string& deprel, OrderStat stat);

  std::string to_json() const;
  static OrderingModel from_json(const std::string& text);

  bool operator==(const OrderingModel&) const = default;

 private:
  std::string language_tag_;
  std::map<Key, OrderStat> entries_;
};

OrderingModel estimate_order_model(const std::vector<corpus::ParsedSentence>& treebank,
                                   const std::string& language_tag);

OrderingModel load_order_model(const fs::path& path);
void save_order_model(const OrderingModel& model, const fs::path& path);

enum class OrderMode { kDeterministic, kSampled };

struct TransformSpec {
  std::map<PosClass, std::shared_ptr<const OrderingModel>> pos_map;
  OrderMode mode = OrderMode::kDeterministic;
  // Only keep_original exists: unseen (head, relation) pairs keep their side
  // and relative order.
  std::string unseen_policy = "keep_original";

  // e.g. "N=fr,V=ja"
  std::string describe() const;
};

// {"pos_map": {"N": "fr.order.json", "V": "ja.order.json"}, "mode": ...}
// Model paths resolve relative to the spec file.
TransformSpec load_transform_spec(const fs::path& path);

// Reordered copy of `tree`; every subtree stays contiguous.
tree::DepTree reorder_tree(const tree::DepTree& tree, const TransformSpec& spec,
                           uint64_t record_seed);
std::vector<std::string> apply_order_model(const tree::DepTree& tree, const TransformSpec& spec,
                                           uint64_t record_seed);

// ---------------------------------------------------------------------------
// Record-level transform

enum class TransformKind { kRandom, kReverse, kModel };

std::optional<TransformKind> parse_transform_kind(const std::string& name);
std::string transform_kind_name(TransformKind kind);

struct Transform {
  TransformKind kind = TransformKind::kReverse;
  const TransformSpec* spec = nullptr;  // required for kModel
};

struct SeedPlan {
  uint64_t global_seed = 0;
  uint64_t seed_for(const std::string& record_id, const std::string& field) const;
};

struct TransformOutcome {
  corpus::Record record;
  bool was_nonprojective = false;
};

// `parses[i]` is the parse of record.text_fields[i]; required (non-null) for
// the model transform, ignored otherwise.
TransformOutcome transform_record(const corpus::Record& record, const Transform& transform,
                                  const std::vector<const corpus::ParsedSentence*>& parses,
                                  const SeedPlan& seeds);

}  // namespace tlf::reorder
