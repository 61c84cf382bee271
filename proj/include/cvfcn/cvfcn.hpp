#pragma once

// Umbrella header for the library.

#include "cvfcn/checkpoint.hpp"
#include "cvfcn/ctensor.hpp"
#include "cvfcn/data.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/gradcheck.hpp"
#include "cvfcn/image_io.hpp"
#include "cvfcn/init.hpp"
#include "cvfcn/init_stats.hpp"
#include "cvfcn/label_grid.hpp"
#include "cvfcn/layers.hpp"
#include "cvfcn/loss.hpp"
#include "cvfcn/metrics.hpp"
#include "cvfcn/net.hpp"
#include "cvfcn/optim.hpp"
#include "cvfcn/train.hpp"
