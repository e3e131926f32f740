#pragma once

#include <vector>

#include "keyforge/image.hpp"
#include "keyforge/keyspec.hpp"

namespace keyforge {

/// Otsu threshold + largest 4-connected component + hole filling.
/// Foreground is the brighter class. Throws NoForeground when the image
/// has no usable intensity split or the resulting mask is empty.
BitMask segment_threshold(const RasterImage& patch);

/// Closed outer boundary of the single 4-connected component, traced with
/// the Moore neighborhood. The first point is the left-most of the
/// top-most boundary pixels; consecutive points are 8-adjacent; the walk
/// descends the left flank first (counter-clockwise with y up).
std::vector<PixelCoord> extract_boundary(const BitMask& mask);

/// tip = right-most foreground pixel (bottom of ties); shoulder =
/// left-most foreground pixel within the bottom quarter of the key's
/// bounding box (bottom of ties). Requires upright orientation.
Keypoints locate_keypoints(const BitMask& mask);

/// Remaining material height per pin as a fraction of blade_height_mm.
/// Requires keypoints on the mask.
std::vector<double> cast_virtual_pins(const BitMask& mask, const KeySpec& spec);

/// Snap normalized heights to the nearest chart depth; ties snap to the
/// shallower index. No MACS filtering.
BittingCode heights_to_code(const std::vector<double>& heights, const KeySpec& spec);

struct MacsBreach {
  int index;  // pair (index, index+1)
  int delta;
};

struct MacsReport {
  bool valid = true;
  std::vector<MacsBreach> breaches;
};

MacsReport validate_macs(const BittingCode& code, const KeySpec& spec);

}  // namespace keyforge
