#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lotn/tensor.hpp"

namespace lotn::io {

/// Parameter container shared by the sentiment classifier and the taggers.
///
/// On disk: a plain-text manifest (kind, key/value metadata, vocabulary, and
/// one "tensor NAME SHAPE OFFSET" line per parameter) terminated by a
/// "payload BYTES" line, followed by the raw values as little-endian IEEE-754
/// doubles. Reloading reproduces every value bit for bit.
struct Checkpoint {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> vocab;
  std::vector<std::pair<std::string, ag::Tensor>> tensors;

  void set_meta(const std::string& key, const std::string& value);
  bool has_meta(const std::string& key) const;
  const std::string& meta_value(const std::string& key) const;  // throws if absent
  bool has_tensor(const std::string& name) const;
  const ag::Tensor& tensor(const std::string& name) const;      // throws if absent
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Atomic text write used for manifests and reports.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace lotn::io
