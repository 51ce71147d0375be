#include "fedunlearn/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fedunlearn/bigint.hpp"
#include "fedunlearn/error.hpp"

namespace fedunlearn::fl {

namespace {

struct BlobSampler {
  const BlobSpec& spec;
  Rng& rng;
  std::normal_distribution<double> normal{0.0, 1.0};

  std::vector<double> noise_row() {
    std::vector<double> x(spec.features);
    for (double& v : x) v = spec.noise * normal(rng);
    return x;
  }

  void general(Dataset& out, std::span<const double> shift, std::size_t n) {
    const std::size_t general_classes = spec.classes;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<int>(rng() % general_classes);
      auto x = noise_row();
      x[static_cast<std::size_t>(c)] += spec.center_scale;
      for (std::size_t d = 0; d < shift.size(); ++d) x[d] += shift[d];
      out.append(x, c);
    }
  }

  void target(Dataset& out, std::size_t private_dim, int label, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      auto x = noise_row();
      x[private_dim] += spec.target_offset;
      out.append(x, label);
    }
  }
};

void validate(const BlobSpec& spec) {
  if (spec.classes < 2 || spec.private_dims == 0 ||
      spec.classes + spec.private_dims > spec.features) {
    fail(ErrorCode::kConfig, "blob spec needs classes + private_dims <= features");
  }
  if (spec.samples_per_client == 0) fail(ErrorCode::kConfig, "samples_per_client must be positive");
}

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorCode::kParse, "IDX header truncated");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

}  // namespace

FederatedData make_blobs(const BlobSpec& spec, std::size_t clients,
                         const std::set<NodeId>& targets, std::uint64_t seed) {
  validate(spec);
  if (clients < 2) fail(ErrorCode::kConfig, "need at least two clients");
  Rng rng(mix_seed(seed, 0x424C4F42ULL));
  BlobSampler sampler{spec, rng};
  const std::size_t shared_dims = spec.features - spec.private_dims;

  auto target_dim = [&](std::size_t ordinal) {
    return spec.features - 1 - (ordinal % spec.private_dims);
  };
  auto target_label = [&](std::size_t ordinal) {
    return static_cast<int>((spec.classes - 1 + spec.classes - ordinal % spec.classes) % spec.classes);
  };

  FederatedData out;
  std::size_t ordinal = 0;
  for (std::size_t k = 0; k < clients; ++k) {
    const auto id = static_cast<NodeId>(k + 1);
    ClientDataset cd{id, Dataset{spec.features, {}, {}}, 0.0};
    if (targets.contains(id)) {
      sampler.target(cd.data, target_dim(ordinal), target_label(ordinal), spec.samples_per_client);
      ++ordinal;
    } else {
      std::vector<double> shift(shared_dims);
      for (double& v : shift) v = spec.client_shift * sampler.normal(rng);
      sampler.general(cd.data, shift, spec.samples_per_client);
    }
    cd.weight = static_cast<double>(cd.data.size());
    out.clients.push_back(std::move(cd));
  }

  out.test = Dataset{spec.features, {}, {}};
  out.mia_calibration = Dataset{spec.features, {}, {}};
  out.target_holdout = Dataset{spec.features, {}, {}};
  sampler.general(out.test, {}, spec.holdout_samples);
  sampler.general(out.mia_calibration, {}, spec.holdout_samples);
  const std::size_t n_targets = std::max<std::size_t>(ordinal, 1);
  for (std::size_t t = 0; t < n_targets; ++t) {
    sampler.target(out.target_holdout, target_dim(t), target_label(t),
                   spec.samples_per_client / n_targets + (t == 0 ? spec.samples_per_client % n_targets : 0));
  }
  return out;
}

std::vector<ClientDataset> partition_iid(const Dataset& pool, std::size_t clients,
                                         std::uint64_t seed) {
  if (clients == 0 || pool.size() < clients) {
    fail(ErrorCode::kConfig, "not enough examples to give every client one");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x50415254ULL));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  std::vector<ClientDataset> out;
  const std::size_t per = pool.size() / clients;
  for (std::size_t k = 0; k < clients; ++k) {
    ClientDataset cd{static_cast<NodeId>(k + 1), Dataset{pool.dim, {}, {}}, 0.0};
    for (std::size_t i = k * per; i < (k + 1) * per; ++i) {
      cd.data.append(pool.row(order[i]), pool.labels[order[i]]);
    }
    cd.weight = static_cast<double>(cd.data.size());
    out.push_back(std::move(cd));
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::istringstream fields(line);
    std::string tok;
    bool numeric = true;
    while (std::getline(fields, tok, ',')) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size()) {
        numeric = false;
        break;
      }
      values.push_back(v);
    }
    if (!numeric) {
      if (line_no == 1) continue;  // header
      fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (values.size() < 2) fail(ErrorCode::kParse, "row needs a label and at least one feature");
    if (out.dim == 0) out.dim = values.size() - 1;
    const double label = values.front();
    if (label < 0 || label != std::floor(label)) fail(ErrorCode::kParse, "label must be a non-negative integer");
    out.append(std::span<const double>(values).subspan(1), static_cast<int>(label));
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  std::ifstream img(images, std::ios::binary);
  std::ifstream lab(labels, std::ios::binary);
  if (!img) fail(ErrorCode::kIo, "cannot open " + images.string());
  if (!lab) fail(ErrorCode::kIo, "cannot open " + labels.string());
  if (read_be32(img) != 0x00000803) fail(ErrorCode::kParse, "bad IDX image magic");
  if (read_be32(lab) != 0x00000801) fail(ErrorCode::kParse, "bad IDX label magic");
  const std::uint32_t n = read_be32(img);
  const std::uint32_t rows = read_be32(img);
  const std::uint32_t cols = read_be32(img);
  if (read_be32(lab) != n) fail(ErrorCode::kParse, "IDX image/label counts differ");

  const std::size_t count = limit == 0 ? n : std::min<std::size_t>(n, limit);
  Dataset out{static_cast<std::size_t>(rows) * cols, {}, {}};
  std::vector<unsigned char> pixels(out.dim);
  std::vector<double> row(out.dim);
  for (std::size_t i = 0; i < count; ++i) {
    if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
      fail(ErrorCode::kParse, "IDX image data truncated");
    }
    char label = 0;
    if (!lab.get(label)) fail(ErrorCode::kParse, "IDX label data truncated");
    for (std::size_t d = 0; d < out.dim; ++d) row[d] = pixels[d] / 255.0;
    out.append(row, static_cast<unsigned char>(label));
  }
  return out;
}

}  // namespace fedunlearn::fl
