#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace angio {

/// Lower-case hex SHA-256.
std::string sha256_hex(const void* data, std::size_t size);
inline std::string sha256_hex(std::string_view s) { return sha256_hex(s.data(), s.size()); }

/// Incremental SHA-256 for multi-part digests.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(const void* data, std::size_t size);
  Sha256& update(std::string_view s) { return update(s.data(), s.size()); }
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_file(const std::string& path);

}  // namespace angio
