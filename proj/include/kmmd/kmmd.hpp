#pragma once

#include "kmmd/corpus.hpp"
#include "kmmd/embeddings.hpp"
#include "kmmd/kernels.hpp"
#include "kmmd/mmd.hpp"
#include "kmmd/pipeline.hpp"
#include "kmmd/provider.hpp"
#include "kmmd/textmetrics.hpp"
