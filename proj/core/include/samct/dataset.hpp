#pragma once

#include "samct/grid.hpp"
#include "samct/ingest.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace samct::data {

struct Sample {
  Image8 image;
  Mask mask;  // all zero for full-background records
  ingest::SampleRecord record;
};

/// Loads the records of `split` (all when empty), optionally restricted to
/// the listed object ids. Paths are relative to `root`.
std::vector<Sample> load(const ingest::Manifest& manifest, const std::filesystem::path& root, std::optional<ingest::Split> split = {},
                         const std::vector<std::string>& objects = {});

/// Natural-image stand-in for the backbone's original training data: one
/// target shape per scene, plus `empty_fraction` of records with an empty
/// target (for negative-only prompts).
std::vector<Sample> natural_set(int count, int size, std::uint64_t seed, double empty_fraction = 0.1);

/// In-memory counterpart of write_ct_like_dataset plus ingestion, used by
/// tests and benchmarks; records carry the split from `split_dataset`.
std::vector<Sample> ct_like_set(int count, int size, std::uint64_t seed);

std::vector<ingest::SampleRecord> records_of(const std::vector<Sample>& samples);

}  // namespace samct::data
