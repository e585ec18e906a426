#pragma once

#include "preqmdl/errors.hpp"
#include "preqmdl/rng.hpp"
#include "preqmdl/graph.hpp"
#include "preqmdl/dataset.hpp"
#include "preqmdl/tabular.hpp"
#include "preqmdl/neural.hpp"
#include "preqmdl/parallel.hpp"
#include "preqmdl/scoring.hpp"
#include "preqmdl/search.hpp"
#include "preqmdl/datagen.hpp"
#include "preqmdl/serialization.hpp"
