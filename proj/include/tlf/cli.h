#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace tlf::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kManifestSchema = "tlf-manifest/1";
inline constexpr long long kContinuedPretrainingTokens = 15'000'000;

struct FileDigest {
  std::string path;  // as given for inputs; relative to the manifest for outputs
  std::string sha256;
  std::string kind;  // outputs: task_table, tokens_jsonl, order_model, embeddings, permutation_map, csv
};

struct Manifest {
  std::string command;
  nlohmann::ordered_json config;  // effective configuration, digested
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  nlohmann::ordered_json report = nlohmann::ordered_json::object();
  std::string created_at;  // excluded from every digest
};

std::string config_digest(const nlohmann::ordered_json& config);
nlohmann::ordered_json build_manifest(const Manifest& m);

// Recomputes output digests and re-reads every output with its module's
// reader. Returns the problems found; empty means the manifest verifies.
std::vector<std::string> verify_manifest(const fs::path& manifest_path);

// Parses the 64-bit seed from --seed or the TLF_SEED environment variable.
std::optional<uint64_t> parse_seed(const std::string& text);

int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tlf::cli
