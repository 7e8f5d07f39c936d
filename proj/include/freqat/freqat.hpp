#pragma once

#include "freqat/analysis.hpp"
#include "freqat/attacks.hpp"
#include "freqat/config.hpp"
#include "freqat/data.hpp"
#include "freqat/io.hpp"
#include "freqat/model.hpp"
#include "freqat/parallel.hpp"
#include "freqat/rng.hpp"
#include "freqat/spectral.hpp"
#include "freqat/tensor.hpp"
#include "freqat/training.hpp"
