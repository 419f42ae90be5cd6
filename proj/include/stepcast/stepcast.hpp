#pragma once

// Umbrella header: the whole toolkit.
#include "stepcast/common.hpp"
#include "stepcast/date.hpp"
#include "stepcast/csv.hpp"
#include "stepcast/ingest.hpp"
#include "stepcast/dataset.hpp"
#include "stepcast/autodiff.hpp"
#include "stepcast/arima.hpp"
#include "stepcast/metrics.hpp"
#include "stepcast/forecasters.hpp"
#include "stepcast/synthcohort.hpp"
#include "stepcast/experiments.hpp"
#include "stepcast/sha256.hpp"
#include "stepcast/checkpoint.hpp"
#include "stepcast/config.hpp"
#include "stepcast/cli.hpp"
