#pragma once

#include "types.hpp"
#include "field_model.hpp"
#include "cholesky.hpp"
#include "inference.hpp"
#include "planner.hpp"
#include "router.hpp"
#include "classifier.hpp"
#include "mission.hpp"
#include "config.hpp"
#include "io.hpp"
