#pragma once

#include "ddosguard/common.hpp"
#include "ddosguard/dataset_ingest.hpp"
#include "ddosguard/preprocess.hpp"
#include "ddosguard/cnn_extractor.hpp"
#include "ddosguard/random_forest.hpp"
#include "ddosguard/mlp.hpp"
#include "ddosguard/folds.hpp"
#include "ddosguard/hybrid_stack.hpp"
#include "ddosguard/eval_metrics.hpp"
#include "ddosguard/model_store.hpp"
#include "ddosguard/gatekeeper.hpp"
#include "ddosguard/config.hpp"
#include "ddosguard/synth.hpp"
