#pragma once

#include "latentmark/battery.hpp"
#include "latentmark/channel.hpp"
#include "latentmark/embedders.hpp"
#include "latentmark/error.hpp"
#include "latentmark/experiments.hpp"
#include "latentmark/latent.hpp"
#include "latentmark/metrics.hpp"
#include "latentmark/parallel.hpp"
#include "latentmark/permute.hpp"
#include "latentmark/probe.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/seedcraft.hpp"
#include "latentmark/swa.hpp"
