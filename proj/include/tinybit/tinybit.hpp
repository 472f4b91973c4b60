#pragma once

// Umbrella header: the whole training pipeline.

#include "tinybit/common.hpp"
#include "tinybit/prng.hpp"
#include "tinybit/tensor.hpp"
#include "tinybit/layers.hpp"
#include "tinybit/model.hpp"
#include "tinybit/optim.hpp"
#include "tinybit/hyperrule.hpp"
#include "tinybit/data.hpp"
#include "tinybit/metrics.hpp"
#include "tinybit/checkpoint.hpp"
#include "tinybit/harness.hpp"
#include "tinybit/gradcheck.hpp"
#include "tinybit/synth.hpp"
