#include "ttlm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "ttlm/errors.hpp"

namespace ttlm {

namespace {

constexpr char kStreamMagic[4] = {'T', 'T', 'I', 'D'};
constexpr std::uint32_t kStreamVersion = 1;

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(buf).str();
}

}  // namespace

Vocabulary::Vocabulary()
    : Vocabulary(from_tokens({std::string(kUnkToken), std::string(kEosToken),
                              std::string(kThinkingToken)})) {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[kUnkId] != kUnkToken || tokens[kEosId] != kEosToken ||
      tokens[kThinkingId] != kThinkingToken) {
    throw ConfigError("vocabulary must start with <unk>, <eos>, <T>");
  }
  Vocabulary v{EmptyTag{}};
  v.token_to_id_.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw ConfigError("empty vocabulary entry at id " + std::to_string(i));
    auto [it, inserted] = v.token_to_id_.emplace(tokens[i], static_cast<TokenId>(i));
    if (!inserted) throw ConfigError("duplicate vocabulary entry: " + tokens[i]);
  }
  v.id_to_token_ = std::move(tokens);
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.find(token) != token_to_id_.end();
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(id_to_token_.size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : id_to_token_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    tokens.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_text();
  if (!out) throw IoError("write failed: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  validate_utf8(text, path.string());
  return from_text(text);
}

std::uint64_t Vocabulary::hash() const { return fnv1a64(to_text()); }

BatchedCorpus::BatchedCorpus(IdMatrix data, Eigen::Index window_len)
    : data_(std::move(data)), window_len_(window_len) {
  const Eigen::Index usable = data_.cols() - 1;
  for (Eigen::Index t = 0; t < usable; t += window_len_) {
    windows_.push_back({t, std::min(window_len_, usable - t)});
  }
}

void validate_utf8(std::string_view text, std::string_view label) {
  std::size_t i = 0;
  const auto fail = [&] {
    throw DecodeError("invalid UTF-8 at byte " + std::to_string(i) + " in " + std::string(label));
  };
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      fail();
    }
    if (i + extra >= text.size()) fail();
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) fail();
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    static constexpr std::uint32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail();
    i += extra + 1;
  }
}

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> tokens;
  if (text.empty()) return tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    if (last) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && is_space(line[i])) ++i;
      std::size_t j = i;
      while (j < line.size() && !is_space(line[j])) ++j;
      if (j > i) tokens.emplace_back(line.substr(i, j - i));
      i = j;
    }
    tokens.emplace_back(kEosToken);
    pos = nl + 1;
    // A trailing newline terminates the last line rather than opening a new one.
    if (last || pos == text.size()) break;
  }
  return tokens;
}

std::vector<std::string> load_corpus(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  validate_utf8(text, path.string());
  return tokenize_text(text);
}

Vocabulary build_vocabulary(std::span<const std::string> tokens, std::optional<std::size_t> max_size,
                            std::size_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string_view, std::size_t> counts;
  for (const auto& t : tokens) {
    if (t == kUnkToken || t == kEosToken || t == kThinkingToken) continue;
    ++counts[t];
  }
  std::vector<std::pair<std::string_view, std::size_t>> ranked;
  for (const auto& kv : counts) {
    if (kv.second >= min_count) ranked.push_back(kv);
  }
  // std::map iteration is already lexicographic, so a stable sort on count keeps ties ordered.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> entries{std::string(kUnkToken), std::string(kEosToken),
                                   std::string(kThinkingToken)};
  for (const auto& [tok, count] : ranked) {
    if (max_size && entries.size() >= *max_size) break;
    entries.emplace_back(tok);
  }
  return Vocabulary::from_tokens(std::move(entries));
}

TokenStream encode(std::span<const std::string> tokens, const Vocabulary& vocab,
                   std::string source_name) {
  TokenStream out;
  out.source_name = std::move(source_name);
  out.ids.reserve(tokens.size());
  for (const auto& t : tokens) out.ids.push_back(vocab.id(t));
  return out;
}

std::vector<std::string> decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(vocab.token(id));
  return out;
}

BatchedCorpus make_batches(const TokenStream& stream, Eigen::Index lanes, Eigen::Index window_len) {
  if (lanes < 1 || window_len < 1) throw ConfigError("lanes and window length must be positive");
  const auto n = static_cast<Eigen::Index>(stream.size());
  if (n < lanes * 2) {
    throw ConfigError("stream '" + stream.source_name + "' has " + std::to_string(n) +
                      " tokens; batching over " + std::to_string(lanes) + " lanes needs at least " +
                      std::to_string(lanes * 2));
  }
  const Eigen::Index cols = n / lanes;
  IdMatrix data = Eigen::Map<const IdMatrix>(stream.ids.data(), lanes, cols);
  return BatchedCorpus(std::move(data), window_len);
}

void save_stream(const TokenStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kStreamMagic, sizeof kStreamMagic);
  detail::write_pod(out, kStreamVersion);
  detail::write_pod(out, static_cast<std::uint64_t>(stream.ids.size()));
  for (auto id : stream.ids) detail::write_pod(out, static_cast<std::uint32_t>(id));
  if (!out) throw IoError("write failed: " + path.string());
}

TokenStream load_stream(const std::filesystem::path& path, std::string source_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, sizeof magic);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kStreamMagic)) {
    throw DecodeError("not an id stream file: " + path.string());
  }
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  if (!detail::read_pod(in, version) || !detail::read_pod(in, count)) {
    throw DecodeError("truncated id stream header: " + path.string());
  }
  if (version != kStreamVersion) {
    throw DecodeError("unsupported id stream version " + std::to_string(version) + ": " +
                      path.string());
  }
  TokenStream out;
  out.source_name = std::move(source_name);
  out.ids.resize(count);
  for (auto& id : out.ids) {
    std::uint32_t raw = 0;
    if (!detail::read_pod(in, raw)) throw DecodeError("truncated id stream: " + path.string());
    id = static_cast<TokenId>(raw);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ttlm
