#pragma once

#include "nes/align.hpp"
#include "nes/conllu.hpp"
#include "nes/corpus.hpp"
#include "nes/embed.hpp"
#include "nes/error.hpp"
#include "nes/evalharness.hpp"
#include "nes/index.hpp"
#include "nes/knn.hpp"
#include "nes/log.hpp"
#include "nes/matcher.hpp"
#include "nes/pca.hpp"
#include "nes/querylang.hpp"
#include "nes/retrieval.hpp"
#include "nes/serialize.hpp"
#include "nes/service.hpp"
#include "nes/synth.hpp"
