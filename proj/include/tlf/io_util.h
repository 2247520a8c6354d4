#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace tlf {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

// Writes go to a sibling temporary file that is renamed over `path` on
// commit(). Destroying an uncommitted writer removes the temporary, so the
// destination never holds a partial file.
class AtomicWriter {
 public:
  explicit AtomicWriter(fs::path path);
  ~AtomicWriter();

  AtomicWriter(const AtomicWriter&) = delete;
  AtomicWriter& operator=(const AtomicWriter&) = delete;

  std::ostream& stream() { return out_; }
  void write(std::string_view bytes) { out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }
  void commit();

  const fs::path& temp_path() const { return temp_; }

 private:
  fs::path path_;
  fs::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_file_atomic(const fs::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

}  // namespace tlf
