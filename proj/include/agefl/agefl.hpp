#pragma once

#include "agefl/aging.hpp"
#include "agefl/clustering.hpp"
#include "agefl/config.hpp"
#include "agefl/data.hpp"
#include "agefl/dataset.hpp"
#include "agefl/error.hpp"
#include "agefl/io.hpp"
#include "agefl/learner.hpp"
#include "agefl/orchestrator.hpp"
#include "agefl/report_io.hpp"
#include "agefl/rng.hpp"
#include "agefl/sparsifiers.hpp"
#include "agefl/suite.hpp"
#include "agefl/vectors.hpp"
