#include "tlf/reorder.h"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>

#include "json.hpp"
#include "tlf/common.h"
#include "tlf/io_util.h"

namespace tlf::reorder {

using corpus::kRoot;
using json = nlohmann::ordered_json;

std::vector<std::string> reverse_tokens(std::vector<std::string> tokens) {
  std::reverse(tokens.begin(), tokens.end());
  return tokens;
}

std::vector<std::string> shuffle_tokens(std::vector<std::string> tokens, uint64_t record_seed) {
  SplitMix64 rng(record_seed);
  fisher_yates(tokens, rng);
  return tokens;
}

std::optional<PosClass> pos_class(const std::string& upos) {
  if (upos == "NOUN" || upos == "PROPN") return PosClass::kNoun;
  if (upos == "VERB") return PosClass::kVerb;
  return std::nullopt;
}

std::string pos_class_name(PosClass c) { return c == PosClass::kNoun ? "N" : "V"; }

// ---------------------------------------------------------------------------
// OrderingModel

std::optional<OrderStat> OrderingModel::lookup(const std::string& head_upos,
                                               const std::string& deprel) const {
  auto it = entries_.find(Key{head_upos, deprel});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<OrderStat> OrderingModel::lookup_with_fallback(const std::string& head_upos,
                                                             const std::string& deprel) const {
  if (auto s = lookup(head_upos, deprel)) return s;
  auto colon = deprel.find(':');
  if (colon != std::string::npos) return lookup(head_upos, deprel.substr(0, colon));
  return std::nullopt;
}

void OrderingModel::set(const std::string& head_upos, const std::string& deprel, OrderStat stat) {
  const std::string what = "order model entry (" + head_upos + ", " + deprel + "): ";
  if (!(stat.p_before >= 0.0 && stat.p_before <= 1.0)) throw Error(what + "p_before outside [0,1]");
  if (!(stat.mean_position >= -1.0 && stat.mean_position <= 1.0))
    throw Error(what + "mean_position outside [-1,1]");
  if (stat.count < 1) throw Error(what + "count must be >= 1");
  entries_[Key{head_upos, deprel}] = stat;
}

namespace {

constexpr const char* kOrderFormat = "tlf-order-model/1";

double parse_decimal(const json& v, const std::string& what) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw Error("order model: " + what + " must be a decimal string");
  const std::string s = v.get<std::string>();
  char* end = nullptr;
  errno = 0;
  double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw Error("order model: bad decimal '" + s + "' for " + what);
  return d;
}

}  // namespace

std::string OrderingModel::to_json() const {
  json doc;
  doc["format"] = kOrderFormat;
  doc["language_tag"] = language_tag_;
  json entries = json::array();
  for (const auto& [key, stat] : entries_) {
    json e;
    e["upos"] = key.first;
    e["deprel"] = key.second;
    e["p_before"] = format_double(stat.p_before);
    e["mean_position"] = format_double(stat.mean_position);
    e["count"] = stat.count;
    entries.push_back(std::move(e));
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

OrderingModel OrderingModel::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("order model: ") + e.what());
  }
  try {
    if (doc.value("format", "") != kOrderFormat)
      throw Error(std::string("order model: expected format ") + kOrderFormat);
    OrderingModel model(doc.at("language_tag").get<std::string>());
    for (const auto& e : doc.at("entries")) {
      OrderStat stat;
      stat.p_before = parse_decimal(e.at("p_before"), "p_before");
      stat.mean_position = parse_decimal(e.at("mean_position"), "mean_position");
      stat.count = e.at("count").get<int64_t>();
      model.set(e.at("upos").get<std::string>(), e.at("deprel").get<std::string>(), stat);
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("order model: ") + e.what());
  }
}

OrderingModel load_order_model(const fs::path& path) {
  try {
    return OrderingModel::from_json(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what(), e.kind());
  }
}

void save_order_model(const OrderingModel& model, const fs::path& path) {
  write_file_atomic(path, model.to_json());
}

namespace {

// Per-node subtree position sums and sizes under original positions.
void subtree_sums(const tree::DepTree& t, std::vector<double>& sum, std::vector<int>& size) {
  const size_t n = t.size();
  sum.assign(n, 0.0);
  size.assign(n, 1);
  for (size_t i = 0; i < n; ++i) sum[i] = static_cast<double>(i);
  std::vector<int> discovery;
  std::vector<int> stack{t.root()};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    discovery.push_back(v);
    for (int c : t.node(v).dependents) stack.push_back(c);
  }
  for (auto it = discovery.rbegin(); it != discovery.rend(); ++it) {
    int p = t.node(*it).parent;
    if (p != kRoot) {
      sum[p] += sum[*it];
      size[p] += size[*it];
    }
  }
}

}  // namespace

OrderingModel estimate_order_model(const std::vector<corpus::ParsedSentence>& treebank,
                                   const std::string& language_tag) {
  if (treebank.empty()) throw Error("estimate_order_model: empty treebank");
  struct Acc {
    int64_t before = 0;
    int64_t count = 0;
    double offset_sum = 0.0;
  };
  std::map<OrderingModel::Key, Acc> acc;
  std::vector<double> sum;
  std::vector<int> size;
  for (const auto& sentence : treebank) {
    tree::DepTree t = tree::build_tree(sentence);
    subtree_sums(t, sum, size);
    const double n = static_cast<double>(t.size());
    for (size_t d = 0; d < t.size(); ++d) {
      int h = t.node(static_cast<int>(d)).parent;
      if (h == kRoot) continue;
      const auto& head = t.node(h);
      if (!pos_class(head.upos)) continue;
      Acc& a = acc[{head.upos, t.node(static_cast<int>(d)).deprel}];
      a.before += static_cast<int>(d) < h;
      a.count += 1;
      a.offset_sum += (sum[d] / size[d] - h) / n;
    }
  }
  OrderingModel model(language_tag);
  for (const auto& [key, a] : acc) {
    OrderStat s;
    s.p_before = static_cast<double>(a.before) / static_cast<double>(a.count);
    s.mean_position = a.offset_sum / static_cast<double>(a.count);
    s.count = a.count;
    model.set(key.first, key.second, s);
  }
  return model;
}

// ---------------------------------------------------------------------------
// TransformSpec

std::string TransformSpec::describe() const {
  std::string out;
  for (const auto& [cls, model] : pos_map) {
    if (!out.empty()) out += ",";
    out += pos_class_name(cls) + "=" + model->language_tag();
  }
  return out.empty() ? "identity" : out;
}

TransformSpec load_transform_spec(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  TransformSpec spec;
  try {
    std::string mode = doc.value("mode", "deterministic");
    if (mode == "deterministic") spec.mode = OrderMode::kDeterministic;
    else if (mode == "sampled") spec.mode = OrderMode::kSampled;
    else throw Error(path.string() + ": unknown mode '" + mode + "'");
    spec.unseen_policy = doc.value("unseen_policy", "keep_original");
    if (spec.unseen_policy != "keep_original")
      throw Error(path.string() + ": unsupported unseen_policy '" + spec.unseen_policy + "'");
    std::map<std::string, std::shared_ptr<const OrderingModel>> cache;
    const json pos_map = doc.value("pos_map", json::object());
    for (const auto& [key, value] : pos_map.items()) {
      PosClass cls;
      if (key == "N") cls = PosClass::kNoun;
      else if (key == "V") cls = PosClass::kVerb;
      else throw Error(path.string() + ": pos_map key '" + key + "' is not N or V");
      fs::path model_path = value.get<std::string>();
      if (model_path.is_relative()) model_path = path.parent_path() / model_path;
      auto& slot = cache[model_path.lexically_normal().string()];
      if (!slot) slot = std::make_shared<const OrderingModel>(load_order_model(model_path));
      spec.pos_map[cls] = slot;
    }
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Model-driven reordering

tree::DepTree reorder_tree(const tree::DepTree& t, const TransformSpec& spec, uint64_t record_seed) {
  SplitMix64 rng(record_seed);
  std::vector<double> sum;
  std::vector<int> size;
  subtree_sums(t, sum, size);
  const double n = static_cast<double>(t.size());

  struct Placed {
    int node;
    bool before;
    double key;
  };

  std::vector<tree::NodeOrder> orders(t.size());
  for (size_t v = 0; v < t.size(); ++v) {
    const tree::Node& head = t.node(static_cast<int>(v));
    orders[v] = {head.dependents, head.head_slot};
    auto cls = pos_class(head.upos);
    if (!cls) continue;
    auto model_it = spec.pos_map.find(*cls);
    if (model_it == spec.pos_map.end()) continue;
    const OrderingModel& model = *model_it->second;

    std::vector<Placed> placed;
    placed.reserve(head.dependents.size());
    for (int d : head.dependents) {
      const double observed = (sum[d] / size[d] - static_cast<double>(v)) / n;
      if (auto stat = model.lookup_with_fallback(head.upos, t.node(d).deprel)) {
        bool before = spec.mode == OrderMode::kDeterministic ? stat->p_before >= 0.5
                                                              : rng.next_unit() < stat->p_before;
        placed.push_back({d, before, stat->mean_position});
      } else {
        placed.push_back({d, d < static_cast<int>(v), observed});
      }
    }
    // `placed` is in original surface order, so stable_sort breaks ties by it.
    std::stable_sort(placed.begin(), placed.end(), [](const Placed& a, const Placed& b) {
      if (a.before != b.before) return a.before;
      return a.key < b.key;
    });
    tree::NodeOrder& order = orders[v];
    order.dependents.clear();
    order.head_slot = 0;
    for (const auto& p : placed) {
      order.dependents.push_back(p.node);
      order.head_slot += p.before;
    }
  }
  return t.with_orders(std::move(orders));
}

std::vector<std::string> apply_order_model(const tree::DepTree& t, const TransformSpec& spec,
                                           uint64_t record_seed) {
  return tree::linearize(reorder_tree(t, spec, record_seed));
}

// ---------------------------------------------------------------------------
// Records

std::optional<TransformKind> parse_transform_kind(const std::string& name) {
  if (name == "random") return TransformKind::kRandom;
  if (name == "reverse") return TransformKind::kReverse;
  if (name == "model") return TransformKind::kModel;
  return std::nullopt;
}

std::string transform_kind_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::kRandom: return "random";
    case TransformKind::kReverse: return "reverse";
    case TransformKind::kModel: return "model";
  }
  return "?";
}

uint64_t SeedPlan::seed_for(const std::string& record_id, const std::string& field) const {
  return derive_record_seed(global_seed, record_id, field);
}

TransformOutcome transform_record(const corpus::Record& record, const Transform& transform,
                                  const std::vector<const corpus::ParsedSentence*>& parses,
                                  const SeedPlan& seeds) {
  TransformOutcome out{record, false};
  for (size_t i = 0; i < out.record.text_fields.size(); ++i) {
    auto& [field, text] = out.record.text_fields[i];
    std::vector<std::string> tokens;
    switch (transform.kind) {
      case TransformKind::kReverse:
        tokens = reverse_tokens(split_whitespace(text));
        break;
      case TransformKind::kRandom:
        tokens = shuffle_tokens(split_whitespace(text), seeds.seed_for(record.id, field));
        break;
      case TransformKind::kModel: {
        if (!transform.spec) throw Error("model transform requires a transform spec");
        const corpus::ParsedSentence* parse = i < parses.size() ? parses[i] : nullptr;
        if (!parse)
          throw Error("model transform requires parses (record '" + record.id + "', field '" + field + "')");
        tree::DepTree t = tree::build_tree(*parse);
        out.was_nonprojective |= !tree::is_projective(t);
        tokens = apply_order_model(t, *transform.spec, seeds.seed_for(record.id, field));
        break;
      }
    }
    text = join(tokens, " ");
  }
  return out;
}

}  // namespace tlf::reorder
