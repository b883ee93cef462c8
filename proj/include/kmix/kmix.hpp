#pragma once

// Umbrella header. PNG support is separate (kmix/png_io.hpp) because it
// needs libpng at link time.

#include "kmix/dataset.hpp"
#include "kmix/dataset_io.hpp"
#include "kmix/errors.hpp"
#include "kmix/image.hpp"
#include "kmix/loss.hpp"
#include "kmix/mixing.hpp"
#include "kmix/rng.hpp"
#include "kmix/sampling.hpp"
#include "kmix/subsampling.hpp"
#include "kmix/toy_classifier.hpp"
#include "kmix/uncertainty.hpp"
