#pragma once

// FCS 3.0 / 3.1 reader and a 3.1 writer. The reader decodes HEADER segment
// offsets, the delimiter-escaped TEXT segment and list-mode DATA for
// datatypes F (float32), D (float64) and I (unsigned integer, 8-64 bits),
// in either byte order. Only linear amplification ($PnE "0,0") is accepted.

#include <bit>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fcmformer/errors.hpp"

namespace fcmformer {

enum class FcsDatatype { f32, f64, integer };
enum class FcsByteOrder { little, big };

inline char datatype_char(FcsDatatype t) {
  switch (t) {
    case FcsDatatype::f32: return 'F';
    case FcsDatatype::f64: return 'D';
    case FcsDatatype::integer: return 'I';
  }
  return '?';
}

struct FcsParamInfo {
  std::string short_name;     // $PnN
  std::string stain;          // $PnS, may be empty
  unsigned bits = 0;          // $PnB
  std::string amplification;  // $PnE
};

struct FcsFile {
  std::string version;  // "3.0" or "3.1"
  std::vector<std::pair<std::string, std::string>> text_keys;  // file order, keys uppercased
  std::size_t n_params = 0;
  std::size_t n_events = 0;
  FcsDatatype datatype = FcsDatatype::f32;
  FcsByteOrder byte_order = FcsByteOrder::little;
  std::vector<FcsParamInfo> params;
  std::vector<double> events;  // n_events x n_params, row-major

  const std::string* find_key(std::string_view key) const {
    for (const auto& [k, v] : text_keys) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

namespace detail {

inline std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::size_t read_header_offset(const std::vector<std::uint8_t>& bytes,
                                      std::size_t at, std::size_t len) {
  std::string field(reinterpret_cast<const char*>(bytes.data()) + at, len);
  std::string t = trim(field);
  if (t.empty()) return 0;
  for (char c : t) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw FcsError(FcsError::Kind::corrupt, at, "non-numeric HEADER offset '" + t + "'");
    }
  }
  return static_cast<std::size_t>(std::stoull(t));
}

// TEXT tokens are separated by single delimiters; a doubled delimiter is a
// literal delimiter character inside the token.
inline std::vector<std::string> split_text_segment(const std::vector<std::uint8_t>& bytes,
                                                   std::size_t begin, std::size_t end,
                                                   char delim) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = begin;
  bool open = false;
  while (i <= end) {
    const char c = static_cast<char>(bytes[i]);
    if (c == delim) {
      if (i + 1 <= end && static_cast<char>(bytes[i + 1]) == delim) {
        current.push_back(delim);
        i += 2;
        open = true;
      } else {
        tokens.push_back(std::move(current));
        current.clear();
        ++i;
        open = false;
      }
    } else {
      current.push_back(c);
      ++i;
      open = true;
    }
  }
  if (open) tokens.push_back(std::move(current));
  return tokens;
}

inline std::uint64_t load_uint(const std::uint8_t* p, unsigned n_bytes, FcsByteOrder order) {
  std::uint64_t v = 0;
  if (order == FcsByteOrder::little) {
    for (unsigned i = 0; i < n_bytes; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  } else {
    for (unsigned i = 0; i < n_bytes; ++i) v = (v << 8) | p[i];
  }
  return v;
}

inline void store_uint(std::uint64_t v, std::uint8_t* p, unsigned n_bytes, FcsByteOrder order) {
  if (order == FcsByteOrder::little) {
    for (unsigned i = 0; i < n_bytes; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
  } else {
    for (unsigned i = 0; i < n_bytes; ++i)
      p[i] = static_cast<std::uint8_t>(v >> (8 * (n_bytes - 1 - i)));
  }
}

}  // namespace detail

inline FcsFile parse_fcs(const std::vector<std::uint8_t>& bytes) {
  using detail::trim, detail::upper;
  if (bytes.size() < 58) {
    throw FcsError(FcsError::Kind::corrupt, bytes.size(),
                   "stream too short for an FCS HEADER (need 58 bytes)");
  }
  FcsFile file;
  const std::string version(reinterpret_cast<const char*>(bytes.data()), 6);
  if (version == "FCS3.0") {
    file.version = "3.0";
  } else if (version == "FCS3.1") {
    file.version = "3.1";
  } else {
    throw FcsError(FcsError::Kind::unsupported_version, 0,
                   "unsupported FCS version '" + version + "' (supported: 3.0, 3.1)");
  }
  const std::size_t text_begin = detail::read_header_offset(bytes, 10, 8);
  const std::size_t text_end = detail::read_header_offset(bytes, 18, 8);
  const std::size_t data_begin = detail::read_header_offset(bytes, 26, 8);
  const std::size_t data_end = detail::read_header_offset(bytes, 34, 8);
  if (text_begin < 58 || text_end < text_begin || text_end >= bytes.size()) {
    throw FcsError(FcsError::Kind::corrupt, 10, "TEXT segment offsets out of range");
  }

  const char delim = static_cast<char>(bytes[text_begin]);
  std::vector<std::string> tokens =
      detail::split_text_segment(bytes, text_begin + 1, text_end, delim);
  if (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  if (tokens.size() % 2 != 0) {
    throw FcsError(FcsError::Kind::corrupt, text_begin,
                   "TEXT segment holds an odd number of tokens");
  }
  for (std::size_t i = 0; i + 1 < tokens.size(); i += 2) {
    file.text_keys.emplace_back(upper(trim(tokens[i])), tokens[i + 1]);
  }

  auto require_key = [&](const std::string& key) -> const std::string& {
    const std::string* v = file.find_key(key);
    if (!v) {
      throw FcsError(FcsError::Kind::corrupt, text_begin, "missing required key " + key);
    }
    return *v;
  };
  auto parse_count = [&](const std::string& key) -> std::size_t {
    const std::string t = trim(require_key(key));
    for (char c : t) {
      if (!std::isdigit(static_cast<unsigned char>(c))) {
        throw FcsError(FcsError::Kind::corrupt, text_begin,
                       key + " is not a non-negative integer: '" + t + "'");
      }
    }
    if (t.empty()) {
      throw FcsError(FcsError::Kind::corrupt, text_begin, key + " is empty");
    }
    return static_cast<std::size_t>(std::stoull(t));
  };

  file.n_params = parse_count("$PAR");
  file.n_events = parse_count("$TOT");
  if (file.n_params == 0) {
    throw FcsError(FcsError::Kind::corrupt, text_begin, "$PAR is zero");
  }

  const std::string datatype = trim(require_key("$DATATYPE"));
  if (datatype == "F") {
    file.datatype = FcsDatatype::f32;
  } else if (datatype == "D") {
    file.datatype = FcsDatatype::f64;
  } else if (datatype == "I") {
    file.datatype = FcsDatatype::integer;
  } else {
    throw FcsError(FcsError::Kind::unsupported_datatype, text_begin,
                   "unsupported $DATATYPE '" + datatype + "' (supported: F, D, I)");
  }

  const std::string byteord = trim(require_key("$BYTEORD"));
  if (byteord == "1,2,3,4") {
    file.byte_order = FcsByteOrder::little;
  } else if (byteord == "4,3,2,1") {
    file.byte_order = FcsByteOrder::big;
  } else {
    throw FcsError(FcsError::Kind::unsupported_byte_order, text_begin,
                   "unsupported $BYTEORD '" + byteord + "'");
  }

  if (const std::string* mode = file.find_key("$MODE")) {
    if (trim(*mode) != "L") {
      throw FcsError(FcsError::Kind::corrupt, text_begin,
                     "only list-mode data supported, $MODE='" + *mode + "'");
    }
  }

  file.params.resize(file.n_params);
  for (std::size_t i = 0; i < file.n_params; ++i) {
    const std::string idx = std::to_string(i + 1);
    FcsParamInfo& p = file.params[i];
    p.short_name = require_key("$P" + idx + "N");
    const std::string bits = trim(require_key("$P" + idx + "B"));
    p.bits = static_cast<unsigned>(std::stoul(bits));
    if (const std::string* s = file.find_key("$P" + idx + "S")) p.stain = *s;
    if (const std::string* e = file.find_key("$P" + idx + "E")) {
      p.amplification = trim(*e);
    } else {
      p.amplification = "0,0";
    }
    if (p.amplification != "0,0") {
      throw FcsError(FcsError::Kind::unsupported_amplification, text_begin,
                     "$P" + idx + "E='" + p.amplification +
                         "' (only linear \"0,0\" supported)");
    }
    const bool bits_ok =
        (file.datatype == FcsDatatype::f32 && p.bits == 32) ||
        (file.datatype == FcsDatatype::f64 && p.bits == 64) ||
        (file.datatype == FcsDatatype::integer &&
         (p.bits == 8 || p.bits == 16 || p.bits == 32 || p.bits == 64));
    if (!bits_ok) {
      throw FcsError(FcsError::Kind::corrupt, text_begin,
                     "$P" + idx + "B=" + bits + " inconsistent with $DATATYPE " + datatype);
    }
  }

  std::size_t event_bytes = 0;
  for (const auto& p : file.params) event_bytes += p.bits / 8;
  const std::size_t need = file.n_events * event_bytes;
  if (need > 0 && (data_end < data_begin || data_begin >= bytes.size() ||
                   data_end - data_begin + 1 < need || data_end >= bytes.size())) {
    throw FcsError(FcsError::Kind::corrupt, data_begin,
                   "DATA segment truncated: need " + std::to_string(need) + " bytes for $TOT=" +
                       std::to_string(file.n_events) + " events");
  }

  file.events.resize(file.n_events * file.n_params);
  std::size_t cursor = data_begin;
  for (std::size_t ev = 0; ev < file.n_events; ++ev) {
    for (std::size_t pi = 0; pi < file.n_params; ++pi) {
      const unsigned nb = file.params[pi].bits / 8;
      const std::uint64_t raw = detail::load_uint(bytes.data() + cursor, nb, file.byte_order);
      double value = 0.0;
      switch (file.datatype) {
        case FcsDatatype::f32:
          value = std::bit_cast<float>(static_cast<std::uint32_t>(raw));
          break;
        case FcsDatatype::f64:
          value = std::bit_cast<double>(raw);
          break;
        case FcsDatatype::integer:
          value = static_cast<double>(raw);
          break;
      }
      file.events[ev * file.n_params + pi] = value;
      cursor += nb;
    }
  }
  return file;
}

inline FcsFile parse_fcs_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FcsError(FcsError::Kind::corrupt, 0, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_fcs(bytes);
}

// ---- writer (test fixtures and the synthetic cohort) -----------------------

struct FcsWriteParam {
  std::string short_name;  // $PnN
  std::string stain;       // $PnS; omitted when empty
};

struct FcsWriteOptions {
  FcsDatatype datatype = FcsDatatype::f32;
  FcsByteOrder byte_order = FcsByteOrder::little;
  unsigned int_bits = 32;      // $PnB for datatype I
  std::string version = "3.1";
};

// Serializes a row-major event table. Integer datatype rounds to nearest and
// clamps to [0, 2^bits - 1].
inline std::vector<std::uint8_t> write_fcs(const std::vector<FcsWriteParam>& params,
                                           const std::vector<double>& events,
                                           std::size_t n_events,
                                           const FcsWriteOptions& opt = {}) {
  if (params.empty()) throw ContractError("write_fcs: no parameters");
  if (events.size() != n_events * params.size()) {
    throw ContractError("write_fcs: event table size mismatch");
  }
  const unsigned bits = opt.datatype == FcsDatatype::f32   ? 32u
                        : opt.datatype == FcsDatatype::f64 ? 64u
                                                           : opt.int_bits;
  if (opt.datatype == FcsDatatype::integer &&
      !(bits == 8 || bits == 16 || bits == 32 || bits == 64)) {
    throw ContractError("write_fcs: unsupported integer width " + std::to_string(bits));
  }

  const char delim = '/';
  auto escape = [&](const std::string& v) {
    std::string out;
    for (char c : v) {
      out.push_back(c);
      if (c == delim) out.push_back(c);  // doubled delimiter = literal
    }
    return out;
  };
  auto pad10 = [](std::size_t v) {
    std::string s = std::to_string(v);
    return std::string(10 - s.size(), '0') + s;
  };

  // Fixed-width $BEGINDATA/$ENDDATA keep TEXT length independent of the
  // offsets, so a single sizing pass suffices.
  auto compose_text = [&](std::size_t dbegin, std::size_t dend) {
    std::string t;
    t.push_back(delim);
    auto kv = [&](const std::string& k, const std::string& v) {
      t += k;
      t.push_back(delim);
      t += escape(v);
      t.push_back(delim);
    };
    kv("$BEGINANALYSIS", "0");
    kv("$ENDANALYSIS", "0");
    kv("$BEGINSTEXT", "0");
    kv("$ENDSTEXT", "0");
    kv("$BEGINDATA", pad10(dbegin));
    kv("$ENDDATA", pad10(dend));
    kv("$BYTEORD", opt.byte_order == FcsByteOrder::little ? "1,2,3,4" : "4,3,2,1");
    kv("$DATATYPE", std::string(1, datatype_char(opt.datatype)));
    kv("$MODE", "L");
    kv("$NEXTDATA", "0");
    kv("$PAR", std::to_string(params.size()));
    kv("$TOT", std::to_string(n_events));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string idx = std::to_string(i + 1);
      kv("$P" + idx + "N", params[i].short_name);
      kv("$P" + idx + "B", std::to_string(bits));
      kv("$P" + idx + "E", "0,0");
      kv("$P" + idx + "R", "262144");
      if (!params[i].stain.empty()) kv("$P" + idx + "S", params[i].stain);
    }
    return t;
  };

  const std::size_t text_begin = 58;
  const std::size_t text_len = compose_text(0, 0).size();
  const std::size_t text_end = text_begin + text_len - 1;
  const std::size_t data_begin = text_end + 1;
  const std::size_t data_len = n_events * params.size() * (bits / 8);
  const std::size_t data_end = data_len == 0 ? 0 : data_begin + data_len - 1;
  const std::string text = compose_text(data_begin, data_end);

  auto pad8 = [](std::size_t v) {
    std::string s = std::to_string(v);
    if (s.size() > 8) throw ContractError("write_fcs: segment offset exceeds HEADER field");
    return std::string(8 - s.size(), ' ') + s;
  };
  std::string header = "FCS" + opt.version + "    ";
  header += pad8(text_begin) + pad8(text_end) + pad8(data_begin) + pad8(data_len ? data_end : 0);
  header += pad8(0) + pad8(0);  // no ANALYSIS segment

  std::vector<std::uint8_t> bytes;
  bytes.reserve(data_begin + data_len);
  bytes.insert(bytes.end(), header.begin(), header.end());
  bytes.insert(bytes.end(), text.begin(), text.end());
  bytes.resize(data_begin + data_len);

  const unsigned nb = bits / 8;
  std::size_t cursor = data_begin;
  for (double v : events) {
    std::uint64_t raw = 0;
    switch (opt.datatype) {
      case FcsDatatype::f32:
        raw = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        break;
      case FcsDatatype::f64:
        raw = std::bit_cast<std::uint64_t>(v);
        break;
      case FcsDatatype::integer: {
        const double max = bits == 64 ? 18446744073709551615.0
                                      : static_cast<double>((std::uint64_t(1) << bits) - 1);
        double clamped = v < 0.0 ? 0.0 : (v > max ? max : v);
        raw = static_cast<std::uint64_t>(std::llround(clamped));
        break;
      }
    }
    detail::store_uint(raw, bytes.data() + cursor, nb, opt.byte_order);
    cursor += nb;
  }
  return bytes;
}

inline void write_fcs_file(const std::string& path, const std::vector<FcsWriteParam>& params,
                           const std::vector<double>& events, std::size_t n_events,
                           const FcsWriteOptions& opt = {}) {
  const std::vector<std::uint8_t> bytes = write_fcs(params, events, n_events, opt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FcsError(FcsError::Kind::corrupt, 0, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FcsError(FcsError::Kind::corrupt, 0, "short write to '" + path + "'");
}

}  // namespace fcmformer
