#pragma once

// Umbrella header for the whole library.

#include "any2full/common.hpp"
#include "any2full/depth_domain.hpp"
#include "any2full/evaluation.hpp"
#include "any2full/io.hpp"
#include "any2full/losses.hpp"
#include "any2full/maps.hpp"
#include "any2full/mde_backbone.hpp"
#include "any2full/numkernel.hpp"
#include "any2full/pipeline.hpp"
#include "any2full/rng.hpp"
#include "any2full/sape.hpp"
#include "any2full/scene_synth.hpp"
#include "any2full/sparse_embed.hpp"
#include "any2full/spsa.hpp"
#include "any2full/tensor.hpp"
#include "any2full/transformer.hpp"
