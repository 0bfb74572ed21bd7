#pragma once

// Everything except the command-line front end (scanhd/cli.hpp).

#include "scanhd/baselines.hpp"
#include "scanhd/dataset.hpp"
#include "scanhd/embedding.hpp"
#include "scanhd/error.hpp"
#include "scanhd/experiment.hpp"
#include "scanhd/flywheel.hpp"
#include "scanhd/fusion.hpp"
#include "scanhd/hdc.hpp"
#include "scanhd/instruction.hpp"
#include "scanhd/label_oracle.hpp"
#include "scanhd/memory.hpp"
#include "scanhd/metrics.hpp"
#include "scanhd/model_io.hpp"
#include "scanhd/parallel.hpp"
#include "scanhd/parameter_space.hpp"
#include "scanhd/random.hpp"
#include "scanhd/synth.hpp"
#include "scanhd/vocabulary.hpp"
