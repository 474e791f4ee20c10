#ifndef CINERECON_CINERECON_HPP
#define CINERECON_CINERECON_HPP

#include "cinerecon/binning.hpp"
#include "cinerecon/core.hpp"
#include "cinerecon/io.hpp"
#include "cinerecon/metrics.hpp"
#include "cinerecon/operators.hpp"
#include "cinerecon/phantom.hpp"
#include "cinerecon/random.hpp"
#include "cinerecon/recon.hpp"
#include "cinerecon/registration.hpp"
#include "cinerecon/sampling.hpp"

#endif // CINERECON_CINERECON_HPP
