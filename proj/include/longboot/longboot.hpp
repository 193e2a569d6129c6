#pragma once

// Umbrella header.

#include "longboot/baselines.hpp"
#include "longboot/blocksize.hpp"
#include "longboot/data_core.hpp"
#include "longboot/diagnostics.hpp"
#include "longboot/error.hpp"
#include "longboot/estimator.hpp"
#include "longboot/inference.hpp"
#include "longboot/io.hpp"
#include "longboot/matrix.hpp"
#include "longboot/mbb.hpp"
#include "longboot/parallel.hpp"
#include "longboot/pipeline.hpp"
#include "longboot/preprocess.hpp"
#include "longboot/rng.hpp"
#include "longboot/simulator.hpp"
