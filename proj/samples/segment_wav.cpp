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


// Segments one WAV file and prints its ROIs with their 49 features.
//
//   segment_wav recording.wav [t_high_db t_low_db]

#include <cstdio>
#include <cstdlib>
#include <exception>

#include "birdlabel.hpp"

int main(int argc, char** argv) {
    if (argc != 2 && argc != 4) {
        std::fprintf(stderr, "usage: %s recording.wav [t_high_db t_low_db]\n", argv[0]);
        return 2;
    }
    try {
        const birdlabel::AudioClip clip = birdlabel::load_audio(argv[1], 44100);
        birdlabel::SegmentationParams params;
        if (argc == 4) {
            params.t_high_db = std::atof(argv[2]);
            params.t_low_db = std::atof(argv[3]);
        }
        const auto rois = birdlabel::segment_recording(clip, params);
        const auto bank = birdlabel::build_gabor_bank();
        std::printf("%zu ROIs in %.2f s\n", rois.size(), clip.duration());
        for (const auto& roi : rois) {
            const auto f = birdlabel::featurize(birdlabel::extract_roi_audio(clip, roi), {}, bank);
            std::printf("%8.3f-%8.3f s %8.1f-%8.1f Hz  centroid %7.1f Hz  w00 %.4f\n", roi.t_min, roi.t_max,
                        roi.f_min, roi.f_max, f.centroid_hz, f.wavelet[0]);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
