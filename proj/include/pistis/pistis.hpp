#pragma once

// Umbrella header for the Pistis engine: content-centric retrieval cascade
// with a feedback-aligned listwise ranker.

#include "pistis/cascade.hpp"
#include "pistis/config.hpp"
#include "pistis/cross_scorer.hpp"
#include "pistis/distribution.hpp"
#include "pistis/document.hpp"
#include "pistis/feedback_sim.hpp"
#include "pistis/gbdt.hpp"
#include "pistis/generation.hpp"
#include "pistis/kv_cache.hpp"
#include "pistis/listwise.hpp"
#include "pistis/matching.hpp"
#include "pistis/memory_store.hpp"
#include "pistis/minhash.hpp"
#include "pistis/pipeline.hpp"
#include "pistis/prompt.hpp"
#include "pistis/service.hpp"
#include "pistis/tokenizer.hpp"
#include "pistis/training.hpp"
#include "pistis/tuner.hpp"
#include "pistis/util.hpp"
