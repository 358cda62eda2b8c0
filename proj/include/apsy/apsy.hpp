#pragma once

// Umbrella header. The HTTP layer is separate (apsy/http_service.hpp) so the
// numerical library does not pull in the socket code.

#include "apsy/bayes.hpp"
#include "apsy/density.hpp"
#include "apsy/error.hpp"
#include "apsy/grid_oracle.hpp"
#include "apsy/numerics.hpp"
#include "apsy/placement.hpp"
#include "apsy/psychometric.hpp"
#include "apsy/samples.hpp"
#include "apsy/session.hpp"
#include "apsy/simlab.hpp"
