#pragma once

#include "bayesfusion/errors.hpp"
#include "bayesfusion/image_plane.hpp"
#include "bayesfusion/numeric_ops.hpp"
#include "bayesfusion/em_engine.hpp"
#include "bayesfusion/metrics.hpp"
#include "bayesfusion/dataset_io.hpp"
