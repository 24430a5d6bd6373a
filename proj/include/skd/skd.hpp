#pragma once

#include "skd/baselines.hpp"
#include "skd/config.hpp"
#include "skd/descriptor.hpp"
#include "skd/detector.hpp"
#include "skd/errors.hpp"
#include "skd/evaluation.hpp"
#include "skd/geometry.hpp"
#include "skd/io.hpp"
#include "skd/kdtree.hpp"
#include "skd/pca.hpp"
#include "skd/pipeline.hpp"
#include "skd/random.hpp"
#include "skd/saliency.hpp"
#include "skd/synthetic.hpp"
