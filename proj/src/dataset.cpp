#include "fadnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>

#include "fadnet/errors.hpp"

#ifdef FADNET_WITH_PNG
#include <png.h>
#endif

namespace fadnet {

Dataset make_dataset(std::vector<KittiFrame> frames, std::vector<Tensor> raw_images, TargetConfig tcfg,
                     std::optional<ImageNormalizer> normalizer) {
  if (frames.empty()) throw ParameterError("dataset: no frames");
  if (frames.size() != raw_images.size()) throw DimensionError("dataset: frame and image counts differ");
  if (tcfg.dims.dims.empty()) tcfg.dims = dimension_templates(frames, tcfg.categories);
  Dataset ds;
  ds.target_config = tcfg;
  ds.normalizer = normalizer ? *normalizer : ImageNormalizer::fit(raw_images);
  ds.samples.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Tensor& img = raw_images[i];
    if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) != static_cast<std::size_t>(tcfg.height) ||
        img.dim(2) != static_cast<std::size_t>(tcfg.width)) {
      throw DimensionError("dataset: image " + frames[i].id + " has shape " + shape_str(img.shape()));
    }
    Sample s;
    s.targets = build_targets(frames[i], tcfg);
    s.image = ds.normalizer.apply(img);
    s.frame = std::move(frames[i]);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset synthetic_dataset(std::uint64_t seed, std::size_t n_frames, std::size_t objects_per_frame,
                          const SyntheticConfig& scfg) {
  auto scenes = generate_synthetic(seed, n_frames, objects_per_frame, scfg);
  std::vector<KittiFrame> frames;
  std::vector<Tensor> images;
  for (auto& s : scenes) {
    frames.push_back(std::move(s.frame));
    images.push_back(std::move(s.image));
  }
  TargetConfig tcfg;
  tcfg.height = scfg.height;
  tcfg.width = scfg.width;
  tcfg.categories = scfg.categories;
  tcfg.dims.dims = scfg.base_dims;
  return make_dataset(std::move(frames), std::move(images), tcfg);
}

#ifdef FADNET_WITH_PNG
bool png_support() { return true; }

Tensor read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ParseError("png: cannot read " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ParseError("png: cannot decode " + path.string() + ": " + img.message);
  }
  const std::size_t h = img.height, w = img.width;
  Tensor out(Shape{3, h, w}, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = buf[(y * w + x) * 3 + c] / 255.0;
  return out;
}
#else
bool png_support() { return false; }

Tensor read_png(const std::filesystem::path& path) {
  throw ContractError("png: support not compiled in (configure with FADNET_PNG=ON) for " + path.string());
}
#endif

Tensor resize_image(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3 || height == 0 || width == 0) throw DimensionError("resize_image: bad shape");
  const std::size_t C = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(Shape{C, height, width}, 0.0);
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  const auto tap = [](double src, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    const double p = std::clamp(src, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(p));
    i1 = std::min(i0 + 1, n - 1);
    f = p - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    tap((static_cast<double>(y) + 0.5) * sy - 0.5, h, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double fx;
      tap((static_cast<double>(x) + 0.5) * sx - 0.5, w, x0, x1, fx);
      for (std::size_t c = 0; c < C; ++c) {
        const double top = image.at(c, y0, x0) * (1 - fx) + image.at(c, y0, x1) * fx;
        const double bot = image.at(c, y1, x0) * (1 - fx) + image.at(c, y1, x1) * fx;
        out.at(c, y, x) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

CameraIntrinsics scale_intrinsics(const CameraIntrinsics& K, double src_h, double src_w, double dst_h,
                                  double dst_w) {
  const double sx = dst_w / src_w, sy = dst_h / src_h;
  return {K.fx * sx, K.fy * sy, (K.u0 + 0.5) * sx - 0.5, (K.v0 + 0.5) * sy - 0.5};
}

LoadedFrames load_frames(const std::filesystem::path& root, int height, int width,
                         const std::vector<std::string>& categories) {
  LoadedFrames out;
  out.frames = load_kitti_dir(root);
  SyntheticConfig scfg;
  scfg.height = height;
  scfg.width = width;
  scfg.categories = categories;
  for (auto& f : out.frames) {
    const auto png = root / "image_2" / (f.id + ".png");
    if (png_support() && std::filesystem::exists(png)) {
      Tensor raw = read_png(png);
      f.intrinsics = scale_intrinsics(f.intrinsics, static_cast<double>(raw.dim(1)),
                                      static_cast<double>(raw.dim(2)), height, width);
      out.images.push_back(resize_image(raw, static_cast<std::size_t>(height), static_cast<std::size_t>(width)));
    } else {
      out.images.push_back(render_scene(f, scfg));
      ++out.rendered;
    }
  }
  return out;
}

std::filesystem::path resolve_data_dir(const std::optional<std::filesystem::path>& explicit_dir) {
  if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
  if (const char* env = std::getenv("FADNET_DATA_DIR"); env && *env) return env;
  throw ParameterError("no data directory: pass one explicitly or set FADNET_DATA_DIR");
}

}  // namespace fadnet
