#pragma once

// Umbrella header: the full pipeline from capture bytes to verdicts.

#include "netwarden/capture.hpp"
#include "netwarden/catalog.hpp"
#include "netwarden/detect.hpp"
#include "netwarden/eval.hpp"
#include "netwarden/events.hpp"
#include "netwarden/flow.hpp"
#include "netwarden/pcap.hpp"
#include "netwarden/remote.hpp"
#include "netwarden/serialize.hpp"
#include "netwarden/stream.hpp"
#include "netwarden/synth.hpp"
#include "netwarden/trace_io.hpp"
