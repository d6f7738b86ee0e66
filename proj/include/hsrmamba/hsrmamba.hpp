#pragma once

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/binary_io.hpp"
#include "hsrmamba/blocks.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/hsi.hpp"
#include "hsrmamba/metrics.hpp"
#include "hsrmamba/model.hpp"
#include "hsrmamba/nn.hpp"
#include "hsrmamba/ops.hpp"
#include "hsrmamba/params.hpp"
#include "hsrmamba/rng.hpp"
#include "hsrmamba/scan_order.hpp"
#include "hsrmamba/selective_scan.hpp"
#include "hsrmamba/tensor.hpp"
#include "hsrmamba/train.hpp"
#include "hsrmamba/wavelet.hpp"
