#include "fadnet/kitti.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fadnet/errors.hpp"
#include "fadnet/log.hpp"

namespace fadnet {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double to_double(const std::string& tok, std::size_t lineno) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("line " + std::to_string(lineno) + ": non-numeric field '" + tok + "'");
  }
  return v;
}

std::vector<ObjectLabel> parse_rows(const std::string& text, std::size_t fields) {
  std::vector<ObjectLabel> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != fields) {
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(fields) +
                       " fields, got " + std::to_string(tok.size()));
    }
    ObjectLabel o;
    o.type = tok[0];
    o.truncated = to_double(tok[1], lineno);
    const double occ = to_double(tok[2], lineno);
    o.occluded = static_cast<int>(occ);
    if (static_cast<double>(o.occluded) != occ) {
      throw ParseError("line " + std::to_string(lineno) + ": occlusion must be an integer");
    }
    o.alpha = to_double(tok[3], lineno);
    o.left = to_double(tok[4], lineno);
    o.top = to_double(tok[5], lineno);
    o.right = to_double(tok[6], lineno);
    o.bottom = to_double(tok[7], lineno);
    o.height = to_double(tok[8], lineno);
    o.width = to_double(tok[9], lineno);
    o.length = to_double(tok[10], lineno);
    o.x = to_double(tok[11], lineno);
    o.y = to_double(tok[12], lineno);
    o.z = to_double(tok[13], lineno);
    o.rotation_y = to_double(tok[14], lineno);
    if (fields == 16) o.score = to_double(tok[15], lineno);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace

void ObjectLabel::set_box3d(const Box3D& b) {
  height = b.H;
  width = b.W;
  length = b.L;
  x = b.x;
  y = b.y + b.H / 2;
  z = b.z;
  rotation_y = b.theta;
}

void ObjectLabel::set_box2d(const Box2D& b) {
  left = b.left();
  top = b.top();
  right = b.right();
  bottom = b.bottom();
}

std::vector<ObjectLabel> parse_label_file(const std::string& text) { return parse_rows(text, 15); }

std::vector<ObjectLabel> parse_result_file(const std::string& text) { return parse_rows(text, 16); }

std::string format_label_file(const std::vector<ObjectLabel>& labels) {
  std::ostringstream os;
  os << std::fixed;
  for (const auto& o : labels) {
    os << o.type << ' ' << std::setprecision(2) << o.truncated << ' ' << o.occluded << ' '
       << std::setprecision(6) << o.alpha << ' ' << o.left << ' ' << o.top << ' ' << o.right << ' '
       << o.bottom << ' ' << o.height << ' ' << o.width << ' ' << o.length << ' ' << o.x << ' ' << o.y
       << ' ' << o.z << ' ' << o.rotation_y;
    if (o.score) os << ' ' << *o.score;
    os << '\n';
  }
  return os.str();
}

CameraIntrinsics parse_calib(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty() || tok[0] != "P2:") continue;
    if (tok.size() != 13) {
      throw ParseError("calib line " + std::to_string(lineno) + ": P2 needs 12 values, got " +
                       std::to_string(tok.size() - 1));
    }
    std::array<double, 12> p{};
    for (std::size_t i = 0; i < 12; ++i) p[i] = to_double(tok[i + 1], lineno);
    CameraIntrinsics K{p[0], p[5], p[2], p[6]};
    return K;
  }
  throw ParseError("calib: missing P2 row");
}

std::string format_calib(const CameraIntrinsics& K) {
  std::ostringstream os;
  os << std::setprecision(12) << "P2: " << K.fx << " 0 " << K.u0 << " 0 0 " << K.fy << ' ' << K.v0
     << " 0 0 0 1 0\n";
  return os.str();
}

int category_index(const std::vector<std::string>& categories, const std::string& type) {
  const auto it = std::find(categories.begin(), categories.end(), type);
  return it == categories.end() ? -1 : static_cast<int>(it - categories.begin());
}

DimensionTemplate dimension_templates(const std::vector<KittiFrame>& frames,
                                      const std::vector<std::string>& categories) {
  std::vector<std::array<double, 3>> sum(categories.size(), {0, 0, 0});
  std::vector<std::size_t> count(categories.size(), 0);
  for (const auto& f : frames) {
    for (const auto& o : f.objects) {
      const int c = category_index(categories, o.type);
      if (c < 0) continue;
      auto& s = sum[static_cast<std::size_t>(c)];
      s[0] += o.height;
      s[1] += o.width;
      s[2] += o.length;
      ++count[static_cast<std::size_t>(c)];
    }
  }
  DimensionTemplate t;
  std::string missing;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    if (count[c] == 0) {
      missing += (missing.empty() ? "" : ", ") + categories[c];
      continue;
    }
    const double n = static_cast<double>(count[c]);
    t.dims.push_back({sum[c][0] / n, sum[c][1] / n, sum[c][2] / n});
  }
  if (!missing.empty()) throw ParameterError("dimension template: no objects for category " + missing);
  return t;
}

Split split_3dop(const std::vector<std::string>& ids, std::uint64_t seed, const std::filesystem::path& split_dir) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw ParameterError("split: duplicate id '" + id + "'");
  }

  bool full_range = ids.size() == 7481;
  if (full_range) {
    for (const auto& id : ids) {
      int v = -1;
      auto [p, ec] = std::from_chars(id.data(), id.data() + id.size(), v);
      if (ec != std::errc() || p != id.data() + id.size() || v < 0 || v > 7480) {
        full_range = false;
        break;
      }
    }
  }
  if (full_range && !split_dir.empty() && std::filesystem::exists(split_dir / "train.txt") &&
      std::filesystem::exists(split_dir / "val.txt")) {
    auto read_ids = [&](const char* name) {
      std::vector<std::string> out;
      std::istringstream in(read_text_file(split_dir / name));
      std::string tok;
      while (in >> tok) out.push_back(tok);
      return out;
    };
    Split s{read_ids("train.txt"), read_ids("val.txt")};
    // Normalize listed ids to the caller's spelling (e.g. zero padding).
    std::map<int, std::string> by_value;
    for (const auto& id : ids) by_value[std::stoi(id)] = id;
    for (auto* list : {&s.train, &s.val})
      for (auto& id : *list) id = by_value.at(std::stoi(id));
    return s;
  }

  // Without the id lists a seeded shuffle stands in; on the full range it
  // keeps the published 3712 / 3769 sizes.
  if (full_range) log_warning("split: 3DOP id lists not found, using a seeded split of the same sizes");
  std::vector<std::string> shuffled = ids;
  std::sort(shuffled.begin(), shuffled.end());
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t n_train = full_range ? 3712 : shuffled.size() / 2;
  Split s;
  s.train.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(n_train));
  s.val.assign(shuffled.begin() + static_cast<long>(n_train), shuffled.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<KittiFrame> load_kitti_dir(const std::filesystem::path& root) {
  const auto label_dir = root / "label_2";
  if (!std::filesystem::is_directory(label_dir)) throw ParseError("no label_2 directory under " + root.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(label_dir)) {
    if (e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<KittiFrame> frames;
  for (const auto& f : files) {
    KittiFrame fr;
    fr.id = f.stem().string();
    try {
      fr.objects = parse_label_file(read_text_file(f));
      fr.intrinsics = parse_calib(read_text_file(root / "calib" / (fr.id + ".txt")));
    } catch (const ParseError& e) {
      throw ParseError(fr.id + ": " + e.what());
    }
    frames.push_back(std::move(fr));
  }
  return frames;
}

void save_kitti_frame(const std::filesystem::path& root, const KittiFrame& frame) {
  write_text_file(root / "label_2" / (frame.id + ".txt"), format_label_file(frame.objects));
  write_text_file(root / "calib" / (frame.id + ".txt"), format_calib(frame.intrinsics));
}

}  // namespace fadnet
