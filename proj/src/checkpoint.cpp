#include "fadnet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fadnet/errors.hpp"

namespace fadnet {
namespace {

constexpr const char* kHeader = "fadnet-checkpoint 1";

std::filesystem::path with_suffix(const std::filesystem::path& p, const char* suffix) {
  return std::filesystem::path(p.string() + suffix);
}

void put_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

Shape parse_shape(const std::string& s) {
  Shape shape;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, 'x')) shape.push_back(std::stoul(tok));
  return shape;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream manifest(with_suffix(path, ".manifest"));
  std::ofstream payload(with_suffix(path, ".bin"), std::ios::binary);
  if (!manifest || !payload) throw std::runtime_error("cannot write checkpoint at " + path.string());
  manifest << kHeader << '\n';
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw ParameterError("checkpoint tensor names cannot contain whitespace: '" + name + "'");
    }
    std::string shape = shape_str(t.shape());
    shape = shape.substr(1, shape.size() - 2);
    manifest << name << ' ' << shape << ' ' << offset << '\n';
    for (double v : t.values()) put_le(payload, v);
    offset += 8 * t.numel();
  }
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream manifest(with_suffix(path, ".manifest"));
  std::ifstream payload(with_suffix(path, ".bin"), std::ios::binary);
  if (!manifest || !payload) throw ParseError("cannot open checkpoint at " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(payload)), std::istreambuf_iterator<char>());

  std::string line;
  std::getline(manifest, line);
  if (line != kHeader) throw ParseError("checkpoint manifest: bad header '" + line + "'");
  TensorMap out;
  std::size_t lineno = 1;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, shape_s;
    std::uint64_t offset = 0;
    if (!(ls >> name >> shape_s >> offset)) {
      throw ParseError("checkpoint manifest line " + std::to_string(lineno) + ": malformed");
    }
    Shape shape = parse_shape(shape_s);
    const std::size_t n = shape_numel(shape);
    if (offset + 8 * n > bytes.size()) {
      throw ParseError("checkpoint payload too short for '" + name + "'");
    }
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = get_le(bytes.data() + offset + 8 * i);
    out.emplace(name, Tensor(std::move(shape), std::move(vals)));
  }
  return out;
}

}  // namespace fadnet
