#pragma once

#include "mali/bridge.hpp"
#include "mali/dataio.hpp"
#include "mali/diffusion.hpp"
#include "mali/embedding.hpp"
#include "mali/error.hpp"
#include "mali/evaluation.hpp"
#include "mali/graph.hpp"
#include "mali/output.hpp"
#include "mali/pipeline.hpp"
#include "mali/transport.hpp"
