#pragma once

#include "m2tr/blocks.hpp"
#include "m2tr/checkpoint.hpp"
#include "m2tr/config.hpp"
#include "m2tr/data.hpp"
#include "m2tr/errors.hpp"
#include "m2tr/fft.hpp"
#include "m2tr/gradcheck.hpp"
#include "m2tr/graph.hpp"
#include "m2tr/harness.hpp"
#include "m2tr/losses.hpp"
#include "m2tr/metrics.hpp"
#include "m2tr/network.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/optim.hpp"
#include "m2tr/params.hpp"
#include "m2tr/rng.hpp"
#include "m2tr/tensor.hpp"
#include "m2tr/tns.hpp"
