#pragma once

// Umbrella header: the full column-type-annotation toolkit.

#include "archetype/benchgen.hpp"
#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/evaluator.hpp"
#include "archetype/pipeline.hpp"
#include "archetype/querier.hpp"
#include "archetype/remapper.hpp"
#include "archetype/rng.hpp"
#include "archetype/sampler.hpp"
#include "archetype/serializer.hpp"
#include "archetype/strings.hpp"
#include "archetype/version.hpp"
