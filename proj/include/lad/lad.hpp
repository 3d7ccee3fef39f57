#pragma once

// Umbrella header for the offline pipeline. Live network adapters live in
// lad/live_http.hpp and lad/backend_factory.hpp and are not pulled in here.

#include "lad/dag.hpp"
#include "lad/errors.hpp"
#include "lad/evaluation.hpp"
#include "lad/gateway.hpp"
#include "lad/manifest.hpp"
#include "lad/page_fetcher.hpp"
#include "lad/perception.hpp"
#include "lad/pipeline.hpp"
#include "lad/prompts.hpp"
#include "lad/reasoning.hpp"
#include "lad/report.hpp"
#include "lad/response_cache.hpp"
#include "lad/run_config.hpp"
#include "lad/scripted_backend.hpp"
#include "lad/search_orchestrator.hpp"
#include "lad/search_provider.hpp"
#include "lad/search_types.hpp"
#include "lad/trace.hpp"
#include "lad/web_search.hpp"
