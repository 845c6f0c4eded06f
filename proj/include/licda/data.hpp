#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "licda/image.hpp"
#include "licda/rng.hpp"
#include "licda/tensor.hpp"

namespace licda {

// ---------------------------------------------------------------------------
// Synthetic domain generators (desk-scale stand-ins for natural / sketch /
// comic imagery). Fully deterministic given (kind, seed, size, index).
// ---------------------------------------------------------------------------

enum class SyntheticKind { kSmoothTexture, kLineSketch, kFlatRegions };

std::string to_string(SyntheticKind k);
SyntheticKind synthetic_kind_from_string(const std::string& s);

struct SyntheticDomainSpec {
    SyntheticKind kind = SyntheticKind::kSmoothTexture;
    std::uint64_t seed = 0;
    int height = 64;
    int width = 64;
    int count = 1;
};

Image synthesize(const SyntheticDomainSpec& spec, int index);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DatasetItem {
    std::string path;  // PNG path, or a cache key for in-memory images
    int label = 0;
};

enum class Split { kTrain, kVal, kTest };

struct DomainDataset {
    std::vector<DatasetItem> items;
    Split split = Split::kTrain;
    int K = 0;  // labels run 0..K
};

struct DomainSplits {
    DomainDataset train, val, test;
    int K = 0;
    std::vector<std::string> domain_names;  // index = label
};

// Loads images lazily and keeps them in memory; also the hook tests use to
// feed synthetic images under pseudo-paths without touching the filesystem.
class ImageCache {
public:
    const Image& get(const std::string& path);
    void put(const std::string& key, Image img);

private:
    std::unordered_map<std::string, Image> cache_;
};

// Expects root/<domain>/*.png. The configured source domain gets label 0,
// remaining domains follow in sorted name order. Items are split by a seeded
// hash of "<domain>/<filename>": 10% validation, 10% test, rest training.
// Unreadable or non-RGB files are skipped with a warning on stderr; an empty
// domain directory is a configuration error.
DomainSplits ingest_directory(const std::string& root, const std::string& source_domain, std::uint64_t seed);

// Reproducibility manifest: one line per item, "<split>\t<label>\t<path>".
std::string split_manifest(const DomainSplits& ds);

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
    Tensor<float> images;     // [B, 3, crop, crop]
    std::vector<int> labels;  // size B
};

// One epoch of batches: domains sampled uniformly (cycling shorter domains),
// seeded random crops and optional horizontal flips, deterministic order per
// (seed, epoch). The tail that does not fill a batch is dropped.
std::vector<Batch> epoch_batches(const DomainDataset& ds, ImageCache& cache, int batch_size, int crop,
                                 bool augment, std::uint64_t seed, int epoch);

}  // namespace licda
