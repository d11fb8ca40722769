#pragma once

// Umbrella header: the whole differentiable space-time splatting toolkit.

#include "gs4d/appearance.hpp"
#include "gs4d/common.hpp"
#include "gs4d/config.hpp"
#include "gs4d/evaluate.hpp"
#include "gs4d/image.hpp"
#include "gs4d/initfit.hpp"
#include "gs4d/objective.hpp"
#include "gs4d/optimizer.hpp"
#include "gs4d/parallel.hpp"
#include "gs4d/primitives.hpp"
#include "gs4d/projection.hpp"
#include "gs4d/random.hpp"
#include "gs4d/rasterizer.hpp"
#include "gs4d/relocation.hpp"
#include "gs4d/scenedata.hpp"
#include "gs4d/train.hpp"
