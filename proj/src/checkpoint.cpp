#include "lotn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lotn::io {
namespace {

constexpr const char* kMagic = "lotn-checkpoint 1";

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
}

void check_field(const std::string& text, const char* what) {
  if (text.empty() || text.find_first_of(" \t\r\n") != std::string::npos)
    throw CheckpointError(std::string("checkpoint: invalid ") + what + " '" + text + "'");
}

std::string shape_text(const ag::Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

ag::Shape parse_shape(const std::string& text) {
  ag::Shape shape;
  std::stringstream in(text);
  std::string dim;
  while (std::getline(in, dim, 'x')) shape.push_back(std::stoul(dim));
  return shape;
}

}  // namespace

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta)
    if (k == key) {
      v = value;
      return;
    }
  meta.emplace_back(key, value);
}

bool Checkpoint::has_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return true;
  return false;
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw CheckpointError("checkpoint: missing metadata '" + key + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const ag::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointError("checkpoint: missing tensor '" + name + "'");
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  check_field(checkpoint.kind, "kind");
  std::ostringstream head;
  head << kMagic << '\n' << "kind " << checkpoint.kind << '\n';
  for (const auto& [k, v] : checkpoint.meta) {
    check_field(k, "metadata key");
    if (v.find_first_of("\r\n") != std::string::npos)
      throw CheckpointError("checkpoint: metadata value for '" + k + "' spans lines");
    head << "meta " << k << ' ' << v << '\n';
  }
  head << "vocab " << checkpoint.vocab.size() << '\n';
  for (const auto& token : checkpoint.vocab) {
    check_field(token, "vocabulary token");
    head << token << '\n';
  }
  std::size_t offset = 0;
  for (const auto& [name, t] : checkpoint.tensors) {
    check_field(name, "tensor name");
    head << "tensor " << name << ' ' << shape_text(t.shape()) << ' ' << offset << '\n';
    offset += t.size() * sizeof(double);
  }
  head << "payload " << offset << '\n';

  std::string blob = head.str();
  blob.reserve(blob.size() + offset);
  for (const auto& [name, t] : checkpoint.tensors) {
    for (double v : t.values()) {
      std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      blob.append(bytes, 8);
    }
  }
  write_file_atomic(path, blob);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& what) { return CheckpointError(path.string() + ": " + what); };
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw fail("not a checkpoint file");

  Checkpoint ck;
  struct Pending {
    std::string name;
    ag::Shape shape;
    std::size_t offset;
  };
  std::vector<Pending> pending;
  std::size_t payload = 0;
  bool done = false;
  while (!done && std::getline(in, line)) {
    auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "kind") {
      ck.kind = rest;
    } else if (key == "meta") {
      auto sep = rest.find(' ');
      ck.meta.emplace_back(rest.substr(0, sep), sep == std::string::npos ? "" : rest.substr(sep + 1));
    } else if (key == "vocab") {
      const std::size_t count = std::stoul(rest);
      ck.vocab.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw fail("truncated vocabulary");
        ck.vocab.push_back(line);
      }
    } else if (key == "tensor") {
      std::istringstream fields(rest);
      Pending p;
      std::string shape;
      if (!(fields >> p.name >> shape >> p.offset)) throw fail("malformed tensor line '" + line + "'");
      p.shape = parse_shape(shape);
      pending.push_back(std::move(p));
    } else if (key == "payload") {
      payload = std::stoul(rest);
      done = true;
    } else {
      throw fail("unknown manifest line '" + line + "'");
    }
  }
  if (!done) throw fail("missing payload section");

  std::string data(payload, '\0');
  if (!in.read(data.data(), static_cast<std::streamsize>(payload))) throw fail("truncated payload");
  for (auto& p : pending) {
    const std::size_t count = ag::element_count(p.shape);
    if (p.offset + count * 8 > payload) throw fail("tensor " + p.name + " exceeds payload");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, data.data() + p.offset + 8 * i, 8);
      values[i] = std::bit_cast<double>(to_little_endian(bits));
    }
    ck.tensors.emplace_back(p.name, ag::Tensor(p.shape, std::move(values)));
  }
  return ck;
}

}  // namespace lotn::io
