#pragma once

#include "q2d/expected.hpp"
#include "q2d/graph.hpp"
#include "q2d/render.hpp"
#include "q2d/lint.hpp"
#include "q2d/metrics.hpp"
#include "q2d/corpus.hpp"
#include "q2d/parallel.hpp"
#include "q2d/prompts.hpp"
#include "q2d/llm.hpp"
#include "q2d/service.hpp"
