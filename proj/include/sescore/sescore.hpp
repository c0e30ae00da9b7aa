#pragma once

#include "sescore/config.hpp"
#include "sescore/error.hpp"
#include "sescore/eval.hpp"
#include "sescore/gateway.hpp"
#include "sescore/perturbers.hpp"
#include "sescore/quality_model.hpp"
#include "sescore/random.hpp"
#include "sescore/remote.hpp"
#include "sescore/severity.hpp"
#include "sescore/span_ledger.hpp"
#include "sescore/synthesis.hpp"
#include "sescore/text.hpp"
