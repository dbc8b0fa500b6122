#ifndef XNER_CHECKPOINT_HPP_
#define XNER_CHECKPOINT_HPP_

// Binary checkpoint container, all integers little-endian:
//
//   "XNERCKPT" u32 version
//   u64 n, n bytes      config (key=value lines)
//   u64 n, n × u32      character inventory (code points)
//   u32 t, t × table    word lists: u64 count, count × (u32 len, bytes)
//   u32 p, p × tensor   u32 len, name bytes, u32 rank, rank × u64 dims,
//                       values as IEEE-754 binary64
//
// Shared components are stored once under their shared name; loading
// rebuilds the structure from the config, which restores the aliasing.

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "xner/model.hpp"
#include "xner/training.hpp"

namespace xner {

inline constexpr char kCheckpointMagic[8] = {'X', 'N', 'E', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  os.write(b, sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw DataError("checkpoint truncated");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(b[i]) << (8 * i);
  return static_cast<T>(u);
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_bytes(std::istream& is, std::uint64_t n) {
  if (n > (1ULL << 34)) throw DataError("checkpoint corrupt: implausible length");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}

inline std::string get_str(std::istream& is) { return get_bytes(is, get_le<std::uint32_t>(is)); }

inline std::string spec_config(const ModelSpec& s) {
  std::ostringstream os;
  os << "scheme=" << to_string(s.scheme) << '\n'
     << "languages=" << join(s.languages, ",") << '\n'
     << "projection=" << (s.projection == ProjectionMode::learned ? "learned" : "identity") << '\n'
     << "lstm_size=" << s.lstm_size << '\n'
     << "max_filter_width=" << s.max_filter_width << '\n'
     << "filters_per_width=" << s.filters_per_width << '\n'
     << "emb_dim=" << s.emb_dim << '\n'
     << "share_filters=" << s.sharing.share_filters << '\n'
     << "share_decoder=" << s.sharing.share_decoder << '\n'
     << "share_lstm=" << s.sharing.share_lstm << '\n'
     << "shared_embedding_space=" << s.sharing.shared_embedding_space << '\n'
     << "table_of=";
  for (std::size_t i = 0; i < s.table_of.size(); ++i) os << (i ? "," : "") << s.table_of[i];
  os << '\n';
  return os.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t n = s.find(sep, pos);
    out.push_back(s.substr(pos, n == std::string::npos ? std::string::npos : n - pos));
    if (n == std::string::npos) break;
    pos = n + 1;
  }
  return out;
}

inline ModelSpec parse_spec_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint config: bad line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("checkpoint config: missing '" + k + "'");
    return it->second;
  };
  auto num = [&](const std::string& k) {
    try {
      return static_cast<std::size_t>(std::stoull(get(k)));
    } catch (const std::logic_error&) {
      throw DataError("checkpoint config: bad number for '" + k + "'");
    }
  };
  ModelSpec s;
  s.scheme = parse_scheme(get("scheme"));
  s.languages = split(get("languages"), ',');
  s.projection = get("projection") == "learned" ? ProjectionMode::learned : ProjectionMode::identity;
  s.lstm_size = num("lstm_size");
  s.max_filter_width = num("max_filter_width");
  s.filters_per_width = num("filters_per_width");
  s.emb_dim = num("emb_dim");
  s.sharing.share_filters = num("share_filters") != 0;
  s.sharing.share_decoder = num("share_decoder") != 0;
  s.sharing.share_lstm = num("share_lstm") != 0;
  s.sharing.shared_embedding_space = num("shared_embedding_space") != 0;
  for (const auto& t : split(get("table_of"), ',')) {
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
      throw DataError("checkpoint config: bad table_of");
    s.table_of.push_back(static_cast<std::size_t>(std::stoull(t)));
  }
  return s;
}

}  // namespace detail

inline void save_checkpoint(const Model& model, std::ostream& os) {
  const ModelSpec& s = model.spec();
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  const std::string cfg = detail::spec_config(s);
  detail::put_le<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::put_le<std::uint64_t>(os, s.chars.size());
  for (char32_t c : s.chars) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.tables.size()));
  for (const auto& t : s.tables) {
    detail::put_le<std::uint64_t>(os, t.size());
    for (const auto& w : t) detail::put_str(os, w);
  }
  const auto& params = model.params();
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const ad::Param* p : params) {
    detail::put_str(os, p->name);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) detail::put_le<std::uint64_t>(os, d);
    for (ad::Real v : p->value.values()) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
  }
}

namespace detail {

inline Model read_checkpoint(std::istream& is) {
  char magic[sizeof kCheckpointMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic))
    throw DataError("not a checkpoint file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  ModelSpec spec = detail::parse_spec_config(detail::get_bytes(is, detail::get_le<std::uint64_t>(is)));
  const auto nchars = detail::get_le<std::uint64_t>(is);
  if (nchars > (1ULL << 21)) throw DataError("checkpoint corrupt: character count");
  for (std::uint64_t i = 0; i < nchars; ++i) spec.chars.push_back(static_cast<char32_t>(detail::get_le<std::uint32_t>(is)));
  const auto ntables = detail::get_le<std::uint32_t>(is);
  if (ntables > 2) throw DataError("checkpoint corrupt: table count");
  for (std::uint32_t t = 0; t < ntables; ++t) {
    const auto n = detail::get_le<std::uint64_t>(is);
    if (n > (1ULL << 32)) throw DataError("checkpoint corrupt: table size");
    std::vector<std::string> words;
    words.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) words.push_back(detail::get_str(is));
    spec.tables.push_back(std::move(words));
  }
  Model model(std::move(spec));
  const auto nparams = detail::get_le<std::uint32_t>(is);
  if (nparams != model.params().size())
    throw DataError("checkpoint holds " + std::to_string(nparams) + " tensors, model expects " +
                    std::to_string(model.params().size()));
  for (std::uint32_t i = 0; i < nparams; ++i) {
    const std::string name = detail::get_str(is);
    ad::Param* p = model.find(name);
    if (!p) throw DataError("checkpoint tensor '" + name + "' does not belong to the model");
    const auto rank = detail::get_le<std::uint32_t>(is);
    if (rank == 0 || rank > 2) throw DataError("checkpoint tensor '" + name + "' has bad rank");
    ad::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(detail::get_le<std::uint64_t>(is));
    if (shape != p->value.shape())
      throw DataError("checkpoint tensor '" + name + "' has shape " + ad::shape_str(shape) + ", expected " +
                      ad::shape_str(p->value.shape()));
    for (auto& v : p->value.values()) v = static_cast<ad::Real>(std::bit_cast<double>(detail::get_le<std::uint64_t>(is)));
  }
  return model;
}

}  // namespace detail

/// Inconsistent stored configuration is a data problem, not a usage one.
inline Model load_checkpoint(std::istream& is) {
  try {
    return detail::read_checkpoint(is);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
}

inline void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint '" + path + "'");
  save_checkpoint(model, os);
  if (!os) throw ConfigError("error writing checkpoint '" + path + "'");
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint '" + path + "'");
  try {
    return load_checkpoint(is);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace xner

#endif  // XNER_CHECKPOINT_HPP_
