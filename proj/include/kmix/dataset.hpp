#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kmix/errors.hpp"
#include "kmix/image.hpp"
#include "kmix/mixing.hpp"

namespace kmix {

/// Images with hard class labels; the in-memory form every reader produces.
struct Dataset {
  std::vector<ImageTensor> images;
  std::vector<int> classes;
  int class_count = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  Sample sample(std::size_t i) const {
    return {images.at(i), SoftLabel::one_hot(classes.at(i), class_count)};
  }

  std::vector<Sample> samples() const {
    std::vector<Sample> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(sample(i));
    return out;
  }

  void push_back(ImageTensor img, int cls) {
    if (!images.empty() && !img.same_shape(images.front())) {
      throw ShapeError("record " + std::to_string(images.size()) + " is " + img.shape_string() +
                       ", expected " + images.front().shape_string());
    }
    images.push_back(std::move(img));
    classes.push_back(cls);
  }
};

}  // namespace kmix
