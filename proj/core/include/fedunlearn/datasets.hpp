#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "fedunlearn/fl.hpp"

namespace fedunlearn::fl {

// Gaussian-blob federation. Retained clients draw class c around
// center_scale * e_c plus a per-client shift; each target client instead
// draws around target_offset * e_j on one of the trailing "private"
// dimensions and always carries a single label, so its contribution is
// visible only through weights no other client exercises.
struct BlobSpec {
  std::size_t features = 8;
  std::size_t classes = 4;
  std::size_t private_dims = 2;
  std::size_t samples_per_client = 100;
  std::size_t holdout_samples = 400;
  double center_scale = 3.0;
  double client_shift = 0.5;
  double noise = 1.0;
  double target_offset = 4.0;
};

struct FederatedData {
  std::vector<ClientDataset> clients;  // clients[k].client == k + 1
  Dataset test;                // held-out general population
  Dataset mia_calibration;     // held-out general population (MIA threshold)
  Dataset target_holdout;      // held-out samples from the targets' distribution
};

/// Client ids are 1..K. Weights are proportional to |D_k|.
FederatedData make_blobs(const BlobSpec& spec, std::size_t clients,
                         const std::set<NodeId>& targets, std::uint64_t seed);

/// Splits `pool` into K equal shards (after a seeded shuffle); ids 1..K.
std::vector<ClientDataset> partition_iid(const Dataset& pool, std::size_t clients,
                                         std::uint64_t seed);

/// Each line "label,f1,f2,...". A non-numeric first line is taken as a header.
Dataset load_csv(const std::filesystem::path& path);

/// IDX image (magic 0x00000803) + label (0x00000801) files, pixels scaled to [0,1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

}  // namespace fedunlearn::fl
