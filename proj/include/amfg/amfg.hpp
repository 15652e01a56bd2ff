#pragma once

#include "amfg/coupling.hpp"
#include "amfg/distance.hpp"
#include "amfg/grid.hpp"
#include "amfg/hjb.hpp"
#include "amfg/io.hpp"
#include "amfg/mfg.hpp"
#include "amfg/model.hpp"
#include "amfg/particles.hpp"
#include "amfg/pmp.hpp"
#include "amfg/transport.hpp"
