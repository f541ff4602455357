#pragma once

#include "graph.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "rewire.hpp"
#include "metrics.hpp"
#include "synthgen.hpp"
#include "nn.hpp"
#include "train.hpp"
#include "io.hpp"
#include "experiment.hpp"
