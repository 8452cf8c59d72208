#pragma once

#include "crfgrad/bench.hpp"
#include "crfgrad/corpus.hpp"
#include "crfgrad/emp.hpp"
#include "crfgrad/expectation.hpp"
#include "crfgrad/fb.hpp"
#include "crfgrad/logspace.hpp"
#include "crfgrad/model.hpp"
#include "crfgrad/model_io.hpp"
#include "crfgrad/semiring.hpp"
#include "crfgrad/training.hpp"
