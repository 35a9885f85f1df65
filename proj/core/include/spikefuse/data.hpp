#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikefuse/audio.hpp"
#include "spikefuse/events.hpp"
#include "spikefuse/image.hpp"

namespace spikefuse {

/// One preprocessed example: log-spectrogram [1, hw, hw] and RGB planes
/// [3, hw, hw], both row-major doubles.
struct Sample {
    std::string class_name;
    std::string id;
    std::size_t label = 0;
    std::vector<double> audio;
    std::vector<double> visual;
};

struct Dataset {
    std::size_t hw = 32;
    std::vector<std::string> class_names;
    std::vector<Sample> samples;

    std::size_t classes() const { return class_names.size(); }
    std::size_t size() const { return samples.size(); }
};

/// Un-preprocessed modalities for one example, in the formats the dataset
/// tree stores on disk.
struct RawSample {
    std::string class_name;
    std::string id;
    std::size_t label = 0;
    Waveform wav;
    Image img;
    EventStream events;
};

/// Generates class k as a colored class-specific glyph at a jittered
/// position over a noisy background, paired with a tone at 500*(k+1) Hz
/// plus Gaussian noise. Glyph shapes depend only on the class index, so
/// datasets drawn with different seeds pose the same task. Audio is
/// quantized to 16-bit up front; the in-memory dataset therefore equals
/// the one read back from a written tree.
RawSample synth_raw_sample(std::size_t classes, std::size_t k, std::size_t index,
                           std::uint64_t seed, std::size_t hw);

Sample preprocess_raw(const RawSample& raw, std::size_t hw);

/// In-memory synthetic dataset, samples ordered class-major.
Dataset synth_dataset(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                      std::size_t hw = 32);

/// Writes root/<class_name>/<sample_id>.{wav,png,evt}.
void write_synth_dataset(const std::string& root, std::size_t classes, std::size_t per_class,
                         std::uint64_t seed, std::size_t hw = 32);

/// Loads a dataset tree: each subdirectory is a class, each paired
/// .wav/.png basename a sample. Class and sample order is lexicographic,
/// so labels are stable across loads.
Dataset load_dataset(const std::string& root, std::size_t hw = 32);

}  // namespace spikefuse
