#pragma once

#include "qaemb/answer_engine.hpp"
#include "qaemb/clustering.hpp"
#include "qaemb/completion.hpp"
#include "qaemb/config.hpp"
#include "qaemb/distill.hpp"
#include "qaemb/embedding.hpp"
#include "qaemb/error.hpp"
#include "qaemb/feature_selection.hpp"
#include "qaemb/hash.hpp"
#include "qaemb/http_client.hpp"
#include "qaemb/log.hpp"
#include "qaemb/matrix_io.hpp"
#include "qaemb/question_bank.hpp"
#include "qaemb/retrieval.hpp"
#include "qaemb/synth.hpp"
#include "qaemb/temporal_encoding.hpp"
#include "qaemb/text.hpp"
