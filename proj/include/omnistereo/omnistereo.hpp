#pragma once

#include "omnistereo/analytic_scene.hpp"
#include "omnistereo/circular_attention.hpp"
#include "omnistereo/depth.hpp"
#include "omnistereo/disparity_math.hpp"
#include "omnistereo/error.hpp"
#include "omnistereo/fusion_eval.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/parallel.hpp"
#include "omnistereo/pipeline.hpp"
#include "omnistereo/raster.hpp"
#include "omnistereo/resample.hpp"
#include "omnistereo/stereo_match.hpp"
