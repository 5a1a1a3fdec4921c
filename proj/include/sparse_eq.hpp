#pragma once

#include "sparse_eq/types.hpp"
#include "sparse_eq/channel_model.hpp"
#include "sparse_eq/block_circulant.hpp"
#include "sparse_eq/correlation.hpp"
#include "sparse_eq/factorization.hpp"
#include "sparse_eq/linear_map.hpp"
#include "sparse_eq/dictionary.hpp"
#include "sparse_eq/omp.hpp"
#include "sparse_eq/equalizer.hpp"
#include "sparse_eq/simulation.hpp"
#include "sparse_eq/config.hpp"
