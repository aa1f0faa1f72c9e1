#pragma once

#include "hke/common.hpp"
#include "hke/dataset/blobs.hpp"
#include "hke/dataset/dataset.hpp"
#include "hke/dataset/io.hpp"
#include "hke/dataset/latent.hpp"
#include "hke/dataset/shapes.hpp"
#include "hke/elicitation/dirichlet.hpp"
#include "hke/elicitation/pool.hpp"
#include "hke/elicitation/selection.hpp"
#include "hke/embedding/losses.hpp"
#include "hke/embedding/model.hpp"
#include "hke/embedding/train.hpp"
#include "hke/experiment/config.hpp"
#include "hke/experiment/experiment.hpp"
#include "hke/hierarchy/kmeans.hpp"
#include "hke/hierarchy/metrics.hpp"
#include "hke/hierarchy/tree.hpp"
#include "hke/participants/virtual_participant.hpp"
