#pragma once

#include "citerec/corpus.hpp"
#include "citerec/date.hpp"
#include "citerec/davinci.hpp"
#include "citerec/embedding.hpp"
#include "citerec/errors.hpp"
#include "citerec/fixture.hpp"
#include "citerec/metrics.hpp"
#include "citerec/nn.hpp"
#include "citerec/pipeline.hpp"
#include "citerec/prior.hpp"
#include "citerec/profiler.hpp"
#include "citerec/split.hpp"
#include "citerec/sweep.hpp"
#include "citerec/util.hpp"
