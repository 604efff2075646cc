#pragma once

#include "errors.hpp"
#include "specfun.hpp"
#include "family.hpp"
#include "gig.hpp"
#include "matvar.hpp"
#include "bfa.hpp"
#include "model.hpp"
#include "aecm.hpp"
#include "selection.hpp"
#include "metrics.hpp"
#include "datagen.hpp"
#include "io.hpp"
