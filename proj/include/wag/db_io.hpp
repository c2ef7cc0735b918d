#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "wag/embeddings.hpp"
#include "wag/io.hpp"

namespace wag {

inline constexpr int kDbFormatVersion = 1;

namespace detail {

inline std::string encode_f32_le(std::span<const float> values) {
  std::string out(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  return out;
}

inline std::vector<float> decode_f32_le(std::string_view bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

inline std::filesystem::path payload_path_for(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  p.replace_extension(".f32");
  return p;
}

}  // namespace detail

inline nlohmann::json grid_to_json(const TileGrid& g) {
  return {{"origin", {{"x", g.origin().x}, {"y", g.origin().y}}},
          {"tile_size_m", g.tile_size()},
          {"rows", g.rows()},
          {"cols", g.cols()}};
}

inline TileGrid grid_from_json(const nlohmann::json& j) {
  GeoPoint origin{};
  if (j.contains("origin")) origin = {j.at("origin").value("x", 0.0), j.at("origin").value("y", 0.0)};
  return TileGrid(origin, j.at("tile_size_m").get<double>(), j.at("rows").get<std::size_t>(),
                  j.at("cols").get<std::size_t>());
}

inline nlohmann::json provenance_to_json(const Provenance& p) {
  if (p.kind == Provenance::Kind::Synthetic) return {{"kind", "synthetic"}, {"seed", p.seed}};
  return {{"kind", "imported"}, {"source_id", p.source_id}};
}

inline nlohmann::json db_manifest(const TileGrid& grid, std::size_t dim, const Provenance& prov,
                                  std::uint32_t payload_crc, std::size_t payload_bytes,
                                  const std::string& payload_name) {
  return {{"format_version", kDbFormatVersion},
          {"grid", grid_to_json(grid)},
          {"dim", dim},
          {"dtype", "f32"},
          {"byte_order", "little"},
          {"provenance", provenance_to_json(prov)},
          {"payload", payload_name},
          {"payload_bytes", payload_bytes},
          {"checksum", "crc32:" + hex32(payload_crc)},
          {"tool_version", kToolVersion}};
}

/// Size of the manifest that accompanies a payload for this grid and dim.
inline std::size_t manifest_overhead_bytes(const TileGrid& grid, std::size_t dim) {
  const std::size_t payload = grid.tile_count() * dim * 4;
  return db_manifest(grid, dim, Provenance{}, 0, payload, "db.f32").dump(2).size() + 1;
}

/// Writes `path` (JSON manifest) and a sibling `.f32` payload.
inline void save_db(const EmbeddingDB& db, const std::filesystem::path& path) {
  const std::string payload = detail::encode_f32_le(db.data());
  const auto payload_path = detail::payload_path_for(path);
  const auto manifest = db_manifest(db.grid(), db.dim(), db.provenance(), crc32_of(payload), payload.size(),
                                    payload_path.filename().string());
  write_file_atomic(payload_path, payload);
  write_file_atomic(path, manifest.dump(2) + "\n");
}

/// Reads a database. With `normalize_rows`, vectors are rescaled to unit
/// norm (for importing raw network output); otherwise non-unit rows are a
/// format error.
inline EmbeddingDB load_db(const std::filesystem::path& path, bool normalize_rows = false) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  try {
    if (m.at("format_version").get<int>() != kDbFormatVersion)
      throw FormatError("unsupported database format_version " + m.at("format_version").dump());
    if (m.value("dtype", std::string("f32")) != "f32")
      throw FormatError("unsupported dtype " + m.at("dtype").dump());
    const TileGrid grid = grid_from_json(m.at("grid"));
    const auto dim = m.at("dim").get<std::size_t>();
    if (dim == 0) throw FormatError("dim must be positive");

    std::filesystem::path payload_path = path.parent_path() / m.at("payload").get<std::string>();
    const std::string payload = read_file(payload_path);
    const std::size_t expected = grid.tile_count() * dim * 4;
    if (m.contains("payload_bytes") && m.at("payload_bytes").get<std::size_t>() != expected)
      throw FormatError("manifest payload_bytes disagrees with grid and dim");
    if (payload.size() != expected)
      throw FormatError("payload is " + std::to_string(payload.size()) + " bytes, expected " +
                        std::to_string(expected));
    const std::string checksum = "crc32:" + hex32(crc32_of(payload));
    if (checksum != m.at("checksum").get<std::string>())
      throw FormatError("checksum mismatch: manifest " + m.at("checksum").get<std::string>() +
                        ", payload " + checksum);

    std::vector<float> values = detail::decode_f32_le(payload);
    for (std::size_t k = 0; k < grid.tile_count(); ++k) {
      double sq = 0.0;
      for (std::size_t i = 0; i < dim; ++i) sq += static_cast<double>(values[k * dim + i]) * values[k * dim + i];
      if (normalize_rows) {
        if (!(sq > 0.0) || !std::isfinite(sq))
          throw FormatError("embedding for tile " + std::to_string(k) + " is zero or non-finite");
        const Embedding e = normalize(std::span<const float>(values).subspan(k * dim, dim));
        std::copy(e.values().begin(), e.values().end(), values.begin() + static_cast<std::ptrdiff_t>(k * dim));
      } else if (!(std::abs(std::sqrt(sq) - 1.0) < 1e-4)) {
        throw FormatError("embedding for tile " + std::to_string(k) + " is not unit norm");
      }
    }

    Provenance prov;
    const auto& p = m.at("provenance");
    if (p.value("kind", std::string("imported")) == "synthetic") {
      prov.kind = Provenance::Kind::Synthetic;
      prov.seed = p.value("seed", std::uint64_t{0});
    } else {
      prov.kind = Provenance::Kind::Imported;
      prov.source_id = p.value("source_id", std::string{});
    }
    return EmbeddingDB(grid, dim, std::move(values), prov);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid manifest " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid manifest grid: ") + e.what());
  }
}

/// Checksum string as stored in the manifest ("crc32:xxxxxxxx").
inline std::string db_checksum(const EmbeddingDB& db) {
  return "crc32:" + hex32(crc32_of(detail::encode_f32_le(db.data())));
}

}  // namespace wag
