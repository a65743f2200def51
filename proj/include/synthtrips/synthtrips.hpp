#pragma once

#include "synthtrips/error.hpp"
#include "synthtrips/types.hpp"
#include "synthtrips/hash.hpp"
#include "synthtrips/text.hpp"
#include "synthtrips/jsonl.hpp"
#include "synthtrips/kb.hpp"
#include "synthtrips/persona.hpp"
#include "synthtrips/filters.hpp"
#include "synthtrips/prompts.hpp"
#include "synthtrips/llm.hpp"
#include "synthtrips/parse.hpp"
#include "synthtrips/embedding.hpp"
#include "synthtrips/metrics.hpp"
#include "synthtrips/store.hpp"
#include "synthtrips/recgen.hpp"
#include "synthtrips/eval_service.hpp"
#include "synthtrips/http_backend.hpp"
#include "synthtrips/eval_server.hpp"
#include "synthtrips/pipeline.hpp"
