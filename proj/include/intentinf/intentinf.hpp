#pragma once

#include "intentinf/checkpoint.hpp"
#include "intentinf/corpus.hpp"
#include "intentinf/diagnostics.hpp"
#include "intentinf/error.hpp"
#include "intentinf/evaluation.hpp"
#include "intentinf/grammar.hpp"
#include "intentinf/inference.hpp"
#include "intentinf/model_store.hpp"
#include "intentinf/ngram.hpp"
#include "intentinf/parallel.hpp"
#include "intentinf/predictor.hpp"
#include "intentinf/recurrent.hpp"
#include "intentinf/util.hpp"
