// Copyright 2026 The birdlabel Authors
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

#pragma once

#include "birdlabel/annotations.hpp"
#include "birdlabel/audio_io.hpp"
#include "birdlabel/clustering.hpp"
#include "birdlabel/config.hpp"
#include "birdlabel/evaluation.hpp"
#include "birdlabel/features.hpp"
#include "birdlabel/pipeline.hpp"
#include "birdlabel/segmentation.hpp"
#include "birdlabel/spectrogram.hpp"
#include "birdlabel/synthetic.hpp"
