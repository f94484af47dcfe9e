#pragma once

// Umbrella header for the whole library.

#include "tokann/corpus.hpp"
#include "tokann/datasetgen.hpp"
#include "tokann/engine_config.hpp"
#include "tokann/error.hpp"
#include "tokann/evalkit.hpp"
#include "tokann/index.hpp"
#include "tokann/lsh.hpp"
#include "tokann/querylang.hpp"
#include "tokann/retrieval.hpp"
#include "tokann/snapshot.hpp"
#include "tokann/types.hpp"
