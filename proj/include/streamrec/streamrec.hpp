#pragma once

// Umbrella header for the streaming-recommender library.

#include "streamrec/config.hpp"
#include "streamrec/decay.hpp"
#include "streamrec/ensemble.hpp"
#include "streamrec/harness.hpp"
#include "streamrec/ingest.hpp"
#include "streamrec/metrics.hpp"
#include "streamrec/models.hpp"
#include "streamrec/report.hpp"
#include "streamrec/rng.hpp"
#include "streamrec/runner.hpp"
#include "streamrec/sampling.hpp"
#include "streamrec/synth.hpp"
#include "streamrec/types.hpp"
