#include "srsim/units.hpp"
