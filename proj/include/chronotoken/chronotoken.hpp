#pragma once

// Umbrella header for the dynamic embedding and tokenization framework for
// irregular multimodal clinical time series.

#include "chronotoken/adam.hpp"
#include "chronotoken/attention.hpp"
#include "chronotoken/config.hpp"
#include "chronotoken/data.hpp"
#include "chronotoken/dataset.hpp"
#include "chronotoken/embedding.hpp"
#include "chronotoken/fusion.hpp"
#include "chronotoken/gradcheck.hpp"
#include "chronotoken/gru.hpp"
#include "chronotoken/loss.hpp"
#include "chronotoken/metrics.hpp"
#include "chronotoken/model.hpp"
#include "chronotoken/params.hpp"
#include "chronotoken/rng.hpp"
#include "chronotoken/synth.hpp"
#include "chronotoken/tape.hpp"
#include "chronotoken/tensor.hpp"
#include "chronotoken/tokenizer.hpp"
#include "chronotoken/train.hpp"
