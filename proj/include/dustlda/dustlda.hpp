// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_DUSTLDA_HPP
#define DUSTLDA_DUSTLDA_HPP

#include "dustlda/error.hpp"
#include "dustlda/matrix.hpp"
#include "dustlda/model.hpp"
#include "dustlda/mstep.hpp"
#include "dustlda/numerics/beta.hpp"
#include "dustlda/numerics/special.hpp"
#include "dustlda/optim/lbfgsb.hpp"
#include "dustlda/parallel.hpp"
#include "dustlda/posterior.hpp"
#include "dustlda/simulator.hpp"
#include "dustlda/vbi/config.hpp"
#include "dustlda/vbi/elbo.hpp"
#include "dustlda/vbi/estep.hpp"
#include "dustlda/vbi/fit.hpp"

#endif  // DUSTLDA_DUSTLDA_HPP
