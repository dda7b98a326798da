#pragma once

#include "cdrmob/core.hpp"
#include "cdrmob/ingest.hpp"
#include "cdrmob/rng.hpp"
#include "cdrmob/fixture.hpp"
#include "cdrmob/synth.hpp"
#include "cdrmob/predictor.hpp"
#include "cdrmob/commute.hpp"
#include "cdrmob/events.hpp"
