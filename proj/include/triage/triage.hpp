#pragma once

#include "triage/backend.hpp"
#include "triage/corpus.hpp"
#include "triage/decoder.hpp"
#include "triage/error.hpp"
#include "triage/hash.hpp"
#include "triage/identifier.hpp"
#include "triage/metrics.hpp"
#include "triage/prompt.hpp"
#include "triage/roster.hpp"
#include "triage/text.hpp"
#include "triage/time.hpp"
#include "triage/train.hpp"
#include "triage/wire.hpp"
