#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "manetl/image.hpp"
#include "manetl/tensor.hpp"

namespace manetl {

enum class Split { Train, Test };

std::string split_name(Split s);

struct SampleRecord {
    std::string path;  // relative to the dataset root, '/'-separated
    int label = 0;
    Split split = Split::Train;
    std::uint64_t aug_seed = 0;
};

// Sample table plus the parameters it was produced under. Every sample sits
// in exactly one split.
struct DatasetManifest {
    std::size_t classes = 0;
    std::size_t per_class = 0;  // 0 when class sizes differ
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    std::string preprocess;              // PreprocessOptions::describe()
    std::uint64_t preprocess_hash = 0;   // PreprocessOptions::fingerprint()
    std::uint64_t dataset_hash = 0;      // dataset_fingerprint() of the pixels
    std::vector<SampleRecord> samples;

    std::size_t count(Split s) const;
    std::vector<std::size_t> indices(Split s) const;
};

// Raw images aligned index-for-index with manifest.samples.
struct Dataset {
    DatasetManifest manifest;
    std::vector<Image> images;
};

struct PreprocessOptions {
    bool enabled = true;       // false: channel mean only, no inversion, no rotation
    std::size_t size = 32;
    double max_rotation = 15;  // degrees
    std::uint8_t fill = 0;

    std::string describe() const;
    std::uint64_t fingerprint() const;
};

// invert -> grayscale -> (augment) rotate by U[-max, max] degrees with fill
// -> resize -> [0, 1]. The rotation angle depends only on `aug_seed`.
Plane preprocess_pipeline(const Image& raw, const PreprocessOptions& options, bool augment,
                          std::uint64_t aug_seed);

// Uniform draw in [0, 1) from the top 53 bits; stable across standard libraries.
double unit_uniform(std::uint64_t bits);

// K classes of procedural glyphs, n jittered renderings each, 48x48 RGB,
// dark ink on a light ground. Every sample starts in the train split.
Dataset generate_synthetic_dataset(std::size_t classes, std::size_t per_class, std::uint64_t seed);

// Stratified: each class keeps round(fraction * size) training samples,
// clamped to [1, size - 1]; ranks come from hash(seed, path).
DatasetManifest split_dataset(const DatasetManifest& manifest, double train_fraction,
                              std::uint64_t seed);

// Hash over every sample's path, label and pixel bytes, in manifest order.
std::uint64_t dataset_fingerprint(const Dataset& dataset);

std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// <root>/<class>/<name>.bmp with class directories taken in sorted order as
// labels 0..K-1. Samples start in the train split.
Dataset scan_dataset_directory(const std::filesystem::path& root, std::uint64_t seed);
// Loads the images a manifest names; verifies labels and, when the manifest
// carries one, the dataset fingerprint.
Dataset load_dataset(const std::filesystem::path& root, const DatasetManifest& manifest);
// Writes each image to <root>/<record.path>.
void write_dataset_images(const std::filesystem::path& root, const Dataset& dataset);

std::string hex64(std::uint64_t v);

// Stacks planes into [B, 1, S, S].
Tensor<float> make_batch(std::span<const Plane* const> planes);

}  // namespace manetl
