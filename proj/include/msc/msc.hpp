#pragma once

#include "msc/adapter.hpp"
#include "msc/data_io.hpp"
#include "msc/diagnostics.hpp"
#include "msc/error.hpp"
#include "msc/geometry.hpp"
#include "msc/history.hpp"
#include "msc/losses.hpp"
#include "msc/matrix.hpp"
#include "msc/random.hpp"
#include "msc/report.hpp"
#include "msc/scoring.hpp"
#include "msc/trainer.hpp"
