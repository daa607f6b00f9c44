#pragma once

#include "qdesign/types.hpp"
#include "qdesign/core.hpp"
#include "qdesign/prox.hpp"
#include "qdesign/screening.hpp"
#include "qdesign/solvers.hpp"
#include "qdesign/homotopy.hpp"
#include "qdesign/oracle.hpp"
