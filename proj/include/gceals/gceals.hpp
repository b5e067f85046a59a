#pragma once

#include "gceals/baselines.hpp"
#include "gceals/benchmark.hpp"
#include "gceals/cluster_head.hpp"
#include "gceals/commands.hpp"
#include "gceals/dataset.hpp"
#include "gceals/error.hpp"
#include "gceals/io.hpp"
#include "gceals/linalg.hpp"
#include "gceals/metrics.hpp"
#include "gceals/neuralnet.hpp"
#include "gceals/training.hpp"
