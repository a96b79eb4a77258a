#pragma once

#include "qdc/analysis.hpp"
#include "qdc/binary_io.hpp"
#include "qdc/bundle.hpp"
#include "qdc/dynamics.hpp"
#include "qdc/eigen_cache.hpp"
#include "qdc/gnn.hpp"
#include "qdc/graph.hpp"
#include "qdc/kernels.hpp"
#include "qdc/rng.hpp"
#include "qdc/sparse.hpp"
#include "qdc/spectral.hpp"
