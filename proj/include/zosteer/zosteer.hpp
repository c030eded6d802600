#pragma once

// Everything: tensors and projection, objectives, the optimizer, embedding
// tables, wire clients and mocks, the synthetic fixture and the harness.

#include "zosteer/clients.hpp"
#include "zosteer/config.hpp"
#include "zosteer/dataset.hpp"
#include "zosteer/embed_store.hpp"
#include "zosteer/error.hpp"
#include "zosteer/harness.hpp"
#include "zosteer/mock.hpp"
#include "zosteer/objective.hpp"
#include "zosteer/optimizer.hpp"
#include "zosteer/services.hpp"
#include "zosteer/synthetic.hpp"
#include "zosteer/tensor.hpp"
#include "zosteer/wire.hpp"
