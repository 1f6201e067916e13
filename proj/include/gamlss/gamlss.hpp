#pragma once

#include "gamlss/error.hpp"
#include "gamlss/special.hpp"
#include "gamlss/rng.hpp"
#include "gamlss/link.hpp"
#include "gamlss/family.hpp"
#include "gamlss/families.hpp"
#include "gamlss/data.hpp"
#include "gamlss/formula.hpp"
#include "gamlss/design.hpp"
#include "gamlss/fit.hpp"
#include "gamlss/diagnostics.hpp"
#include "gamlss/functionals.hpp"
#include "gamlss/effects.hpp"
#include "gamlss/bootstrap.hpp"
#include "gamlss/csv.hpp"
#include "gamlss/config.hpp"
#include "gamlss/simulate.hpp"
#include "gamlss/svg.hpp"
#include "gamlss/report.hpp"
#include "gamlss/cli.hpp"
