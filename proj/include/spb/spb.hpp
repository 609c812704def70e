#pragma once

// Umbrella header. png_io.hpp and pipeline.hpp need libpng and are not
// included here.

#include "spb/activations.hpp"
#include "spb/core.hpp"
#include "spb/detect.hpp"
#include "spb/error.hpp"
#include "spb/ingest.hpp"
#include "spb/metrics.hpp"
#include "spb/numeric.hpp"
#include "spb/poison.hpp"
#include "spb/reference.hpp"
#include "spb/rng.hpp"
#include "spb/simpred.hpp"
#include "spb/synthetic.hpp"
#include "spb/trigger.hpp"
#include "spb/trigger_spec.hpp"
