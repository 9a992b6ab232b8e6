#pragma once

#include "fusegeom/anchors.hpp"
#include "fusegeom/boxes.hpp"
#include "fusegeom/calib.hpp"
#include "fusegeom/common.hpp"
#include "fusegeom/dataio.hpp"
#include "fusegeom/eval.hpp"
#include "fusegeom/kdtree.hpp"
#include "fusegeom/losses.hpp"
#include "fusegeom/pseudolidar.hpp"
#include "fusegeom/synth.hpp"
