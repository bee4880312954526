#pragma once

/// Umbrella header for the core library (everything except the HTTP service).

#include "gsamp/chebyshev.hpp"
#include "gsamp/coherence.hpp"
#include "gsamp/decoder.hpp"
#include "gsamp/eigcount.hpp"
#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"
#include "gsamp/image.hpp"
#include "gsamp/knn.hpp"
#include "gsamp/parallel.hpp"
#include "gsamp/partition.hpp"
#include "gsamp/random.hpp"
#include "gsamp/rip.hpp"
#include "gsamp/sampling.hpp"
#include "gsamp/segmentation.hpp"
#include "gsamp/slic.hpp"
#include "gsamp/solvers.hpp"
#include "gsamp/spectral.hpp"
#include "gsamp/synthetic.hpp"
