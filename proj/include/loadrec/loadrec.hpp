#pragma once

// Minute-resolution load disaggregation from interval meter averages and a
// feeder-rate aggregate: operators, measurement model, convex solver,
// scenario generators, evaluation metrics, and file formats.

#include "loadrec/errors.hpp"
#include "loadrec/eval.hpp"
#include "loadrec/io.hpp"
#include "loadrec/model.hpp"
#include "loadrec/prox.hpp"
#include "loadrec/rng.hpp"
#include "loadrec/solver.hpp"
#include "loadrec/synth.hpp"
#include "loadrec/transforms.hpp"
#include "loadrec/version.hpp"
