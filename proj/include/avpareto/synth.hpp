// Copyright 2026 The avpareto Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Synthetic trajectory fixtures: a two-lane highway platoon with mixed AVs
// and human drivers, and an urban intersection with a left turn.

#ifndef AVPARETO_SYNTH_HPP
#define AVPARETO_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "avpareto/ingest.hpp"
#include "avpareto/table.hpp"

namespace avpareto::synth {

struct SynthOptions {
  std::uint64_t seed = 7;
  int highway_steps = 600;
  int urban_steps = 400;
  int platoon_size = 9;        // lane A vehicles; odd positions are AVs
  double position_noise = 0.02;  // m, std of measurement noise
  ingest::FrameTransform transform{0.1, 0.1, 100.0, 200.0};  // pixels -> m
};

struct SynthDataset {
  std::string name;
  Table table;  // columns id,time,x,y,lane,type,length,width (pixels)
};

std::vector<SynthDataset> generate(const SynthOptions& options = {});

/// Column mapping matching the generated tables.
ingest::ColumnSchema schema();

}  // namespace avpareto::synth

#endif  // AVPARETO_SYNTH_HPP
