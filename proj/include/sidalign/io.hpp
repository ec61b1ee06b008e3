#pragma once

#include "sidalign/core.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sidalign::io {

// SID assignment JSONL: header line {"spec":{"L":..,"sizes":[..]}} followed by
// one {"item":..,"sid":[..]} object per line, ordered by item id.
void write_assignment(std::ostream& out, const SidAssignment& a);
SidAssignment read_assignment(std::istream& in);
void save_assignment(const std::filesystem::path& path, const SidAssignment& a);
SidAssignment load_assignment(const std::filesystem::path& path);

// Token mapping JSON: {"spec":{..},"maps":[[[new,old],...], ...]}, pairs sorted by new token.
std::string mapping_to_json(const TokenMapping& m);
TokenMapping mapping_from_json(const std::string& text);
void save_mapping(const std::filesystem::path& path, const TokenMapping& m);
TokenMapping load_mapping(const std::filesystem::path& path);

// Interaction log TSV with header "user\titem\tts".
void write_events(std::ostream& out, const std::vector<InteractionEvent>& events);
std::vector<InteractionEvent> read_events(std::istream& in);
void save_events(const std::filesystem::path& path, const std::vector<InteractionEvent>& events);
std::vector<InteractionEvent> load_events(const std::filesystem::path& path);

// Binary embeddings: "SIDEMB01", u32 count, u32 dim, then per record
// u32 id length, id bytes, dim f32 values. All integers little-endian.
void write_embeddings(std::ostream& out, const ItemEmbeddingTable& table);
ItemEmbeddingTable read_embeddings(std::istream& in);
void save_embeddings(const std::filesystem::path& path, const ItemEmbeddingTable& table);
ItemEmbeddingTable load_embeddings(const std::filesystem::path& path);

// Shared little-endian helpers (also used by the model format).
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
double get_f64(std::istream& in);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace sidalign::io
