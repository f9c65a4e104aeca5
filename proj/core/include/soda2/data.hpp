#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "soda2/tensor.hpp"

namespace soda2 {

// Label value marking unknown-class ground truth in HSL1 files.
inline constexpr std::uint16_t kUnknownSentinel = 65535;

// (bands x height x width) radiance volume, band-sequential (band-major,
// then row-major within a band).
struct HsiCube {
    std::size_t bands = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
    std::string name;

    double at(std::size_t b, std::size_t i, std::size_t j) const {
        return values[(b * height + i) * width + j];
    }
    double& at(std::size_t b, std::size_t i, std::size_t j) {
        return values[(b * height + i) * width + j];
    }
    void validate() const;  // throws on broken invariants
};

// 0 = unlabeled, 1..C = class id, kUnknownSentinel = unknown ground truth.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint16_t> labels;
    std::vector<std::string> class_names;

    std::uint16_t at(std::size_t i, std::size_t j) const { return labels[i * width + j]; }
};

enum class Domain { Source, Target };

// n patches of (bands x p x p); labels are 1-based class ids, present iff
// the batch is source-domain.
struct PatchBatch {
    Tensor patches;  // (n x bands x p x p)
    std::vector<int> labels;
    Domain domain = Domain::Source;
    std::size_t patch = 0;

    std::size_t size() const { return patches.shape.empty() ? 0 : patches.shape[0]; }
    std::size_t bands() const { return patches.shape[1]; }
};

struct DatasetMeta {
    int known_classes = 4;      // C^S
    bool unknown_present = true;
    std::uint64_t seed = 0;
};

// --- HSC1 / HSL1 file formats -------------------------------------------
// HSC1: magic "HSC1" | u32 LE header length | UTF-8 JSON
// {"bands":B,"height":H,"width":W,"dtype":"f32"} | B*H*W little-endian f32.
// HSL1: magic "HSL1" | u32 LE header length | {"height","width","classes":[..]}
// | H*W little-endian u16.
HsiCube load_cube(const std::string& path);
void save_cube(const HsiCube& cube, const std::string& path);
LabelMap load_labels(const std::string& path);
void save_labels(const LabelMap& map, const std::string& path);

// Per-band standardization to mean 0, standard deviation 1 (population
// convention, divisor N). Constant bands are an error naming the band.
HsiCube standardize_bands(const HsiCube& cube);

// One patch per labeled pixel (labels given) or per pixel (labels null).
// Edge pixels mirror-pad across the border; the patch center is the pixel.
PatchBatch extract_patches(const HsiCube& cube, const LabelMap* labels, std::size_t p,
                           Domain domain);

struct SynthResult {
    HsiCube source;
    LabelMap source_labels;  // sparse training split, 1..C^S
    HsiCube target;
    LabelMap target_labels;  // dense ground truth incl. kUnknownSentinel
};

// Synthetic cross-scene pair: per-class smooth spectral signatures on
// smoothed block regions; the target is an affine-shifted re-render with
// extra unknown-class regions. Deterministic in meta.seed; emitted values
// are f32-exact so memory and file pipelines agree bit for bit.
SynthResult synth_pair(const DatasetMeta& meta, double shift, std::size_t bands,
                       std::size_t size, std::size_t p, int unknown_classes = 1);

// Index plan for one epoch: each entry is (source indices, target indices)
// with batch_size/2 of each; the final entry may be smaller (both halves
// stay equal-sized). Every source index appears exactly once per epoch.
// Targets are consumed from a seeded permutation, or sampled with
// replacement when the target pool is smaller than the epoch demand.
std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
batch_index_plan(std::size_t n_source, std::size_t n_target, std::size_t batch_size,
                 std::uint64_t seed);

// Materializing iterator over one epoch of mixed mini-batches.
class BatchIter {
  public:
    BatchIter(const PatchBatch& source, const PatchBatch& target, std::size_t batch_size,
              std::uint64_t seed);

    struct Pair {
        PatchBatch source;
        PatchBatch target;
    };
    std::optional<Pair> next();

  private:
    const PatchBatch& source_;
    const PatchBatch& target_;
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> plan_;
    std::size_t cursor_ = 0;
};

// Sub-batch extraction by index (shared by BatchIter and the trainer).
PatchBatch gather_patches(const PatchBatch& batch, const std::vector<std::size_t>& idx);

}  // namespace soda2
