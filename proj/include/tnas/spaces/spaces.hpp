#pragma once

#include "tnas/spaces/architecture.hpp"
#include "tnas/spaces/conv_macro.hpp"
#include "tnas/spaces/sites.hpp"
#include "tnas/spaces/supernet.hpp"
#include "tnas/spaces/tiny_lm.hpp"
#include "tnas/spaces/toy_cell.hpp"
