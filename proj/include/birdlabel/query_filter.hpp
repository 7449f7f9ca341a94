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

#include <cstdint>
#include <string>
#include <vector>

#include "birdlabel/error.hpp"

namespace birdlabel {

struct QueryFilter {
    std::string species;  // scientific name, "Genus epithet"
    std::string sound_type = "song";
    std::vector<std::string> qualities{"A", "B"};
    double min_duration_s = 20.0;
    double max_duration_s = 180.0;
    std::size_t max_results = 100;
    std::size_t sample_size = 20;
    std::uint64_t random_seed = 0;

    void validate() const {
        if (!(min_duration_s > 0.0) || !(max_duration_s >= min_duration_s))
            throw InvalidArgument("fetch: duration bounds must be positive and ordered");
        if (sample_size > max_results) throw InvalidArgument("fetch: sample_size exceeds max_results");
        if (qualities.empty()) throw InvalidArgument("fetch: no quality grades accepted");
    }
};

}  // namespace birdlabel
