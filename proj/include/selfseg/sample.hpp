#pragma once

#include <string>

#include "selfseg/image.hpp"

namespace selfseg {

struct LabeledSample {
  std::string id;
  GrayImage image;
  BinaryMask mask;
};

struct UnlabeledSample {
  std::string id;
  GrayImage image;
};

struct PseudoSample {
  std::string id;
  GrayImage image;
  BinaryMask mask;
  int origin_iteration = 0;
};

}  // namespace selfseg
