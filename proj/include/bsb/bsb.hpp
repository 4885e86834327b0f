#pragma once

#include "bsb/certification.hpp"
#include "bsb/errors.hpp"
#include "bsb/extremal.hpp"
#include "bsb/flows.hpp"
#include "bsb/geometry.hpp"
#include "bsb/hamiltonian.hpp"
#include "bsb/linalg.hpp"
#include "bsb/ode.hpp"
#include "bsb/problems_io.hpp"
#include "bsb/secondvar.hpp"
#include "bsb/shooting.hpp"
#include "bsb/symexpr.hpp"
