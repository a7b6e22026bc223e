#pragma once

#include "predpca/error.hpp"
#include "predpca/rng.hpp"
#include "predpca/linalg.hpp"
#include "predpca/preprocess.hpp"
#include "predpca/spline_basis.hpp"
#include "predpca/spca.hpp"
#include "predpca/pred_pca.hpp"
#include "predpca/nelder_mead.hpp"
#include "predpca/kriging.hpp"
#include "predpca/design.hpp"
#include "predpca/parallel.hpp"
#include "predpca/model_selection.hpp"
#include "predpca/world.hpp"
#include "predpca/simulation.hpp"
#include "predpca/io.hpp"
