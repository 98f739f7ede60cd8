#pragma once

#include "e3/adam.hpp"
#include "e3/bertqa.hpp"
#include "e3/checkpoint.hpp"
#include "e3/decision.hpp"
#include "e3/dialogue.hpp"
#include "e3/editor.hpp"
#include "e3/encoder.hpp"
#include "e3/entailment.hpp"
#include "e3/evaluation.hpp"
#include "e3/extraction.hpp"
#include "e3/labels.hpp"
#include "e3/lexicon.hpp"
#include "e3/model.hpp"
#include "e3/ops.hpp"
#include "e3/parameters.hpp"
#include "e3/sharc.hpp"
#include "e3/synthetic.hpp"
#include "e3/tensor.hpp"
#include "e3/text.hpp"
#include "e3/training.hpp"
