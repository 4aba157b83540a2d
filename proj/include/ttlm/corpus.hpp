#ifndef TTLM_CORPUS_HPP
#define TTLM_CORPUS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace ttlm {

using TokenId = std::int32_t;

// Reserved ids; every vocabulary starts with these three entries.
inline constexpr TokenId kUnkId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kThinkingId = 2;

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kThinkingToken = "<T>";

using IdMatrix = Eigen::Matrix<TokenId, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Vocabulary {
 public:
  // Specials-only vocabulary.
  Vocabulary();

  // Builds from an id-ordered token list. The first three entries must be
  // the special tokens and all entries must be distinct.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return id_to_token_.size(); }

  // Returns kUnkId for unknown tokens.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

  TokenId unk_id() const noexcept { return kUnkId; }
  TokenId eos_id() const noexcept { return kEosId; }
  TokenId thinking_id() const noexcept { return kThinkingId; }

  // Text form: one token per line, line number = id.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  // 64-bit FNV-1a of the text form (identical to hashing the vocab file).
  std::uint64_t hash() const;

 private:
  struct EmptyTag {};
  explicit Vocabulary(EmptyTag) {}

  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct TokenStream {
  std::vector<TokenId> ids;
  std::string source_name;

  std::size_t size() const noexcept { return ids.size(); }
};

// Contiguous lane batching: lane k holds stream ids [k*T, (k+1)*T).
class BatchedCorpus {
 public:
  struct Window {
    Eigen::Index start;
    Eigen::Index width;
  };

  BatchedCorpus(IdMatrix data, Eigen::Index window_len);

  Eigen::Index lanes() const noexcept { return data_.rows(); }
  Eigen::Index columns() const noexcept { return data_.cols(); }
  Eigen::Index window_len() const noexcept { return window_len_; }
  const IdMatrix& data() const noexcept { return data_; }

  std::size_t window_count() const noexcept { return windows_.size(); }
  const std::vector<Window>& windows() const noexcept { return windows_; }

  auto inputs(const Window& w) const { return data_.middleCols(w.start, w.width); }
  auto targets(const Window& w) const { return data_.middleCols(w.start + 1, w.width); }

 private:
  IdMatrix data_;
  Eigen::Index window_len_;
  std::vector<Window> windows_;
};

// Whitespace tokens per line, each line closed with "<eos>".
std::vector<std::string> load_corpus(const std::filesystem::path& path);
std::vector<std::string> tokenize_text(std::string_view text);

// Throws DecodeError naming `label` on malformed UTF-8.
void validate_utf8(std::string_view text, std::string_view label);

Vocabulary build_vocabulary(std::span<const std::string> tokens,
                            std::optional<std::size_t> max_size = std::nullopt,
                            std::size_t min_count = 1);

TokenStream encode(std::span<const std::string> tokens, const Vocabulary& vocab,
                   std::string source_name = {});
std::vector<std::string> decode(std::span<const TokenId> ids, const Vocabulary& vocab);

BatchedCorpus make_batches(const TokenStream& stream, Eigen::Index lanes, Eigen::Index window_len);

// Binary id stream: "TTID", u32 version, u64 count, count x u32 (little endian).
void save_stream(const TokenStream& stream, const std::filesystem::path& path);
TokenStream load_stream(const std::filesystem::path& path, std::string source_name = {});

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace ttlm

#endif  // TTLM_CORPUS_HPP
