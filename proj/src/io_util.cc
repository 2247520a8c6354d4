#include "tlf/io_util.h"

#include <openssl/evp.h>

#include <atomic>
#include <memory>
#include <sstream>
#include <unistd.h>

#include "tlf/common.h"

namespace tlf {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string(), ErrorKind::kIo);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error("read failed: " + path.string(), ErrorKind::kIo);
  return std::move(ss).str();
}

namespace {
std::atomic<unsigned> temp_counter{0};
}

AtomicWriter::AtomicWriter(fs::path path) : path_(std::move(path)) {
  temp_ = path_;
  temp_ += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(temp_counter++);
  out_.open(temp_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot write " + path_.string(), ErrorKind::kIo);
}

AtomicWriter::~AtomicWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    fs::remove(temp_, ec);
  }
}

void AtomicWriter::commit() {
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string(), ErrorKind::kIo);
  out_.close();
  std::error_code ec;
  fs::rename(temp_, path_, ec);
  if (ec) throw Error("cannot rename into " + path_.string() + ": " + ec.message(), ErrorKind::kIo);
  committed_ = true;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  AtomicWriter w(path);
  w.write(bytes);
  w.commit();
}

namespace {

struct DigestCtx {
  DigestCtx() : ctx(EVP_MD_CTX_new()) {
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  ~DigestCtx() { EVP_MD_CTX_free(ctx); }
  void update(const void* data, size_t len) { EVP_DigestUpdate(ctx, data, len); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }
  EVP_MD_CTX* ctx;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  DigestCtx d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string(), ErrorKind::kIo);
  DigestCtx d;
  std::unique_ptr<char[]> buf(new char[1 << 16]);
  while (in) {
    in.read(buf.get(), 1 << 16);
    d.update(buf.get(), static_cast<size_t>(in.gcount()));
  }
  return d.hex();
}

}  // namespace tlf
