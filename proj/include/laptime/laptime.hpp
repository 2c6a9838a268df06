#pragma once

#include "laptime/config_io.hpp"
#include "laptime/conic/program.hpp"
#include "laptime/conic/solver.hpp"
#include "laptime/errors.hpp"
#include "laptime/fitting.hpp"
#include "laptime/lap_optimizer.hpp"
#include "laptime/powertrain.hpp"
#include "laptime/track.hpp"
#include "laptime/transcription.hpp"
