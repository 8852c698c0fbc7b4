#include "fcd/preprocess.hpp"

#include <cmath>

#include "fcd/common.hpp"

namespace fcd::preprocess {

SquareRect enlarge_and_square(const FaceBox& box, int image_h, int image_w, double factor) {
  check_arg(box.width > 0 && box.height > 0, "enlarge_and_square: degenerate box");
  check_arg(factor > 0, "enlarge_and_square: factor must be positive");
  check_arg(box.x0 < image_w && box.y0 < image_h && box.x0 + box.width > 0 && box.y0 + box.height > 0,
            "enlarge_and_square: box does not intersect the image");
  double side = factor * std::max(box.width, box.height);
  double cx = box.x0 + 0.5 * box.width;
  double cy = box.y0 + 0.5 * box.height;
  SquareRect r;
  r.side = std::max(1, static_cast<int>(std::lround(side)));
  r.y0 = static_cast<int>(std::lround(cy - 0.5 * r.side));
  r.x0 = static_cast<int>(std::lround(cx - 0.5 * r.side));
  return r;
}

Image extract_crop(const Image& image, const SquareRect& rect) {
  return crop_replicate(image, rect.y0, rect.x0, rect.side, rect.side);
}

Mask extract_crop(const Mask& mask, const SquareRect& rect) {
  return crop_replicate(mask, rect.y0, rect.x0, rect.side, rect.side);
}

Image resize_crop(const Image& crop, int target_size) {
  check_arg(crop.height > 0 && crop.width > 0, "resize_crop: empty crop");
  return resize_bilinear(crop, target_size, target_size);
}

CropPair split_face_context(const Image& crop, const Mask& seg, Real fill) {
  check_arg(crop.height == seg.height && crop.width == seg.width,
            "split_face_context: mask not aligned to crop");
  CropPair pair;
  pair.face = Image(crop.height, crop.width, crop.channels, fill);
  pair.context = Image(crop.height, crop.width, crop.channels, fill);
  pair.seg = seg;
  size_t ones = 0;
  for (int y = 0; y < crop.height; ++y)
    for (int x = 0; x < crop.width; ++x) {
      Image& dst = seg.at(y, x) ? pair.face : pair.context;
      ones += seg.at(y, x) != 0;
      for (int c = 0; c < crop.channels; ++c) dst.at(y, x, c) = crop.at(y, x, c);
    }
  pair.degenerate_mask = (ones == 0 || ones == seg.data.size());
  return pair;
}

FaceBox mask_bbox(const Mask& mask) {
  int ymin = mask.height, ymax = -1, xmin = mask.width, xmax = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
      }
  check(ymax >= 0, "mask_bbox: empty mask");
  FaceBox box;
  box.x0 = xmin;
  box.y0 = ymin;
  box.width = xmax - xmin + 1;
  box.height = ymax - ymin + 1;
  return box;
}

}  // namespace fcd::preprocess
