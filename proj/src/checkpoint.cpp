#include "ttlm/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"

namespace ttlm {

namespace {

constexpr char kMagic[4] = {'T', 'T', 'L', 'M'};
constexpr std::uint32_t kFlagTied = 1u;

template <typename Tensor>
void write_tensor(std::ostream& os, const Tensor& t) {
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) detail::write_pod(os, static_cast<double>(t(r, c)));
  }
}

template <typename Tensor>
void read_tensor(std::istream& is, Tensor& t, const std::filesystem::path& path) {
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      if (!detail::read_pod(is, t(r, c))) {
        throw CheckpointError(CheckpointError::Kind::kTruncated,
                              "checkpoint truncated in tensor data: " + path.string());
      }
    }
  }
}

}  // namespace

void save_checkpoint(const Params& params, const std::filesystem::path& path,
                     std::uint64_t vocab_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod(out, static_cast<std::uint32_t>(params.dims.vocab));
  detail::write_pod(out, static_cast<std::uint32_t>(params.dims.embed));
  detail::write_pod(out, static_cast<std::uint32_t>(params.dims.hidden));
  detail::write_pod(out, params.dims.tied ? kFlagTied : 0u);
  detail::write_pod(out, vocab_hash);
  params.for_each([&](std::string_view name, const auto& t) {
    // A tied model's output projection is the embedding.
    if (name == "w_out") {
      write_tensor(out, params.output_weights());
    } else {
      write_tensor(out, t);
    }
  });
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string());

  const auto truncated = [&] {
    return CheckpointError(CheckpointError::Kind::kTruncated,
                           "checkpoint header truncated: " + path.string());
  };
  char magic[4] = {};
  in.read(magic, sizeof magic);
  if (in.gcount() != 4) throw truncated();
  if (!std::equal(magic, magic + 4, kMagic)) {
    throw CheckpointError(CheckpointError::Kind::kMagic, "bad checkpoint magic: " + path.string());
  }
  std::uint32_t version = 0;
  if (!detail::read_pod(in, version)) throw truncated();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersion,
                          "unsupported checkpoint version " + std::to_string(version) + " in " +
                              path.string());
  }
  std::uint32_t v = 0, e = 0, h = 0, flags = 0;
  Checkpoint ck;
  if (!detail::read_pod(in, v) || !detail::read_pod(in, e) || !detail::read_pod(in, h) ||
      !detail::read_pod(in, flags) || !detail::read_pod(in, ck.vocab_hash)) {
    throw truncated();
  }
  ModelDims dims{v, e, h, (flags & kFlagTied) != 0};
  try {
    ck.params = Params::zeros(dims);
  } catch (const ConfigError& err) {
    throw CheckpointError(CheckpointError::Kind::kShape,
                          std::string(err.what()) + " in " + path.string());
  }
  ck.params.for_each([&](std::string_view, auto& t) { read_tensor(in, t, path); });
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(CheckpointError::Kind::kShape,
                          "trailing bytes after tensor data in " + path.string());
  }
  return ck;
}

}  // namespace ttlm
