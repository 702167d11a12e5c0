#pragma once

// Umbrella header: the whole engine in dependency order.

#include "sos/error.hpp"
#include "sos/core.hpp"
#include "sos/data.hpp"
#include "sos/templates.hpp"
#include "sos/backends.hpp"
#include "sos/http_backend.hpp"
#include "sos/evaluation.hpp"
#include "sos/selection.hpp"
#include "sos/operators.hpp"
#include "sos/landscape.hpp"
#include "sos/ledger.hpp"
#include "sos/strategies.hpp"
#include "sos/report.hpp"
#include "sos/config.hpp"
#include "sos/cli.hpp"
