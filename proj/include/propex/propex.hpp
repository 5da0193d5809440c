#pragma once

#include "propex/autograd.hpp"
#include "propex/config.hpp"
#include "propex/confidence_head.hpp"
#include "propex/corpus.hpp"
#include "propex/encoder.hpp"
#include "propex/errors.hpp"
#include "propex/evaluator.hpp"
#include "propex/joint_model.hpp"
#include "propex/objectives.hpp"
#include "propex/optimizer.hpp"
#include "propex/parameters.hpp"
#include "propex/rng.hpp"
#include "propex/trainer.hpp"
