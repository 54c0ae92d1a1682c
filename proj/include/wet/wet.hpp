#pragma once

// Umbrella header for the core toolkit. The HTTP proxy lives in
// wet/proxy.hpp and needs the wet::proxy target.
#include "wet/attack.hpp"
#include "wet/codec.hpp"
#include "wet/corpus.hpp"
#include "wet/error.hpp"
#include "wet/experiment.hpp"
#include "wet/keygen.hpp"
#include "wet/linalg.hpp"
#include "wet/rng.hpp"
#include "wet/variants.hpp"
#include "wet/verifier.hpp"
