#pragma once

// Umbrella header.

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/baselines.hpp"
#include "gfn4rec/checkpoint.hpp"
#include "gfn4rec/config.hpp"
#include "gfn4rec/data.hpp"
#include "gfn4rec/domain.hpp"
#include "gfn4rec/encoder.hpp"
#include "gfn4rec/errors.hpp"
#include "gfn4rec/experiment.hpp"
#include "gfn4rec/harness.hpp"
#include "gfn4rec/io.hpp"
#include "gfn4rec/metrics.hpp"
#include "gfn4rec/models.hpp"
#include "gfn4rec/nn.hpp"
#include "gfn4rec/objectives.hpp"
#include "gfn4rec/policy.hpp"
#include "gfn4rec/recommender.hpp"
#include "gfn4rec/rng.hpp"
#include "gfn4rec/simulator.hpp"
#include "gfn4rec/synthetic.hpp"
