#pragma once

// Umbrella header for the seed localization toolkit.

#include "seedloc/adam.hpp"
#include "seedloc/checkpoint.hpp"
#include "seedloc/eval.hpp"
#include "seedloc/gradcheck.hpp"
#include "seedloc/io.hpp"
#include "seedloc/layers.hpp"
#include "seedloc/loss.hpp"
#include "seedloc/net.hpp"
#include "seedloc/parallel.hpp"
#include "seedloc/phantom.hpp"
#include "seedloc/pipeline.hpp"
#include "seedloc/postprocess.hpp"
#include "seedloc/preprocess.hpp"
#include "seedloc/rng.hpp"
#include "seedloc/targetmap.hpp"
#include "seedloc/tensor.hpp"
#include "seedloc/train.hpp"
#include "seedloc/types.hpp"
