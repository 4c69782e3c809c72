#pragma once

#include <string>
#include <vector>

#include "m3sot/geom3d.hpp"

namespace m3sot {

struct Frame {
  PointCloud cloud;
  Box3D box;
  friend bool operator==(const Frame&, const Frame&) = default;
};

/// One target followed through an ordered list of frames.
struct Tracklet {
  std::string id;
  std::string category;
  std::vector<Frame> frames;

  std::size_t size() const { return frames.size(); }
  /// Throws ValidationError unless there are ≥ 2 frames, boxes are valid
  /// and the box size is constant.
  void validate() const;
  friend bool operator==(const Tracklet&, const Tracklet&) = default;
};

}  // namespace m3sot
