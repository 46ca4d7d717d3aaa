#pragma once

#include "medqr/corpus.hpp"
#include "medqr/embed.hpp"
#include "medqr/error.hpp"
#include "medqr/evalkit.hpp"
#include "medqr/index_io.hpp"
#include "medqr/learn.hpp"
#include "medqr/report.hpp"
#include "medqr/represent.hpp"
#include "medqr/retrieve.hpp"
#include "medqr/rng.hpp"
#include "medqr/textnorm.hpp"
#include "medqr/utf8.hpp"
