#pragma once

// Certified robust data attribution: influence-function intervals for convex
// models (raw data space) and covariance-geometry intervals for linearized
// gradient-feature attribution, plus the spectral, certification and anomaly
// diagnostics built on them.

#include "wtrak/anomaly.hpp"
#include "wtrak/certification.hpp"
#include "wtrak/convex.hpp"
#include "wtrak/covariance.hpp"
#include "wtrak/errors.hpp"
#include "wtrak/experiment.hpp"
#include "wtrak/feature_matrix.hpp"
#include "wtrak/io.hpp"
#include "wtrak/parallel.hpp"
#include "wtrak/rng.hpp"
#include "wtrak/synth.hpp"
#include "wtrak/trak.hpp"
