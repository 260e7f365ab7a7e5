#pragma once

#include "mfim/analysis.hpp"
#include "mfim/config.hpp"
#include "mfim/error.hpp"
#include "mfim/exact.hpp"
#include "mfim/io.hpp"
#include "mfim/model.hpp"
#include "mfim/noise.hpp"
#include "mfim/pauli.hpp"
#include "mfim/protocol.hpp"
#include "mfim/rng.hpp"
#include "mfim/sampling.hpp"
#include "mfim/state.hpp"
#include "mfim/stats.hpp"
#include "mfim/workflows.hpp"
