#pragma once

#include "fcd/image.hpp"

namespace fcd::preprocess {

struct FaceBox {
  double x0 = 0, y0 = 0;
  double width = 0, height = 0;
  double confidence = 1.0;
};

// Integer square source rectangle. May extend past the image bounds; crop
// extraction replicates edge pixels instead of shrinking the square.
struct SquareRect {
  int y0 = 0;
  int x0 = 0;
  int side = 0;
};

// Squares the detection box on the longer axis, grows it by `factor`, and
// centers it on the box center. Rejects degenerate boxes.
SquareRect enlarge_and_square(const FaceBox& box, int image_h, int image_w, double factor = 1.2);

Image extract_crop(const Image& image, const SquareRect& rect);
Mask extract_crop(const Mask& mask, const SquareRect& rect);

// Bilinear resize of a crop to target_size x target_size.
Image resize_crop(const Image& crop, int target_size);

struct CropPair {
  Image face;      // original content where S==1, fill elsewhere
  Image context;   // original content where S==0, fill elsewhere
  Mask seg;        // the mask used for the split
  SquareRect crop_geometry;
  bool degenerate_mask = false;  // all-zero or all-one mask
};

// Complementary masking: exactly one of (face, context) keeps each pixel.
CropPair split_face_context(const Image& crop, const Mask& seg, Real fill);

// Tight bounding box of the mask's face pixels; throws on an empty mask.
FaceBox mask_bbox(const Mask& mask);

}  // namespace fcd::preprocess
