#pragma once

#include "bimodal/error.hpp"
#include "bimodal/grid.hpp"
#include "bimodal/image_io.hpp"
#include "bimodal/mtf.hpp"
#include "bimodal/parallel.hpp"
#include "bimodal/patterns.hpp"
#include "bimodal/phasor.hpp"
#include "bimodal/pipeline.hpp"
#include "bimodal/scanset.hpp"
#include "bimodal/separator.hpp"
#include "bimodal/simulator.hpp"
#include "bimodal/unwrap.hpp"
