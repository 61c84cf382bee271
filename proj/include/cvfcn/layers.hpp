#pragma once

#include "cvfcn/layers/activation.hpp"
#include "cvfcn/layers/batch_norm.hpp"
#include "cvfcn/layers/conv.hpp"
#include "cvfcn/layers/dropout.hpp"
#include "cvfcn/layers/pooling.hpp"
