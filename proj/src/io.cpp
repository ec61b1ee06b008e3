#include "sidalign/io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sidalign::io {

using nlohmann::json;

namespace {

json spec_to_json(const CodebookSpec& spec) {
  return json{{"L", spec.num_positions()}, {"sizes", spec.sizes}};
}

CodebookSpec spec_from_json(const json& j) {
  try {
    const auto num_positions = j.at("L").get<long long>();
    auto sizes = j.at("sizes").get<std::vector<long long>>();
    if (num_positions < 1 || static_cast<std::size_t>(num_positions) != sizes.size())
      throw ValidationError("spec L does not match number of sizes");
    std::vector<std::size_t> out;
    for (long long v : sizes) {
      if (v < 1) throw ValidationError("codebook sizes must be >= 1");
      out.push_back(static_cast<std::size_t>(v));
    }
    return CodebookSpec(std::move(out));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed spec object: ") + e.what());
  }
}

std::string id_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer() || j.is_number_unsigned()) return j.dump();
  throw IoError("item id must be a string or integer, got " + j.dump());
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void write_assignment(std::ostream& out, const SidAssignment& a) {
  out << json{{"spec", spec_to_json(a.spec)}}.dump() << '\n';
  for (const auto& [item, sid] : a.entries) {
    out << json{{"item", item}, {"sid", sid.tokens}}.dump() << '\n';
  }
}

SidAssignment read_assignment(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("assignment file is empty");
  strip_cr(line);
  SidAssignment a;
  try {
    a.spec = spec_from_json(json::parse(line).at("spec"));
  } catch (const json::exception& e) {
    throw IoError(std::string("bad assignment header: ") + e.what());
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      std::string item = id_from_json(j.at("item"));
      SemanticId sid;
      for (const auto& t : j.at("sid")) {
        const auto v = t.get<long long>();
        if (v < 0) throw ValidationError("negative token for item '" + item + "'");
        sid.tokens.push_back(static_cast<Token>(v));
      }
      if (!a.entries.emplace(item, std::move(sid)).second)
        throw ValidationError("duplicate item '" + item + "' in assignment");
    } catch (const json::exception& e) {
      throw IoError("assignment line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  auto violations = validate_assignment(a);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw ValidationError("invalid assignment: item '" + v.item + "' " + v.rule);
  }
  return a;
}

void save_assignment(const std::filesystem::path& path, const SidAssignment& a) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  write_assignment(out, a);
}

SidAssignment load_assignment(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_assignment(in);
}

std::string mapping_to_json(const TokenMapping& m) {
  json maps = json::array();
  for (const auto& position : m.maps) {
    json pairs = json::array();
    for (const auto& [from, to] : position) pairs.push_back(json::array({from, to}));
    maps.push_back(std::move(pairs));
  }
  return json{{"spec", spec_to_json(m.spec)}, {"maps", std::move(maps)}}.dump() + "\n";
}

TokenMapping mapping_from_json(const std::string& text) {
  TokenMapping m;
  try {
    const json j = json::parse(text);
    m.spec = spec_from_json(j.at("spec"));
    for (const auto& position : j.at("maps")) {
      std::map<Token, Token> pairs;
      for (const auto& p : position) {
        const auto from = p.at(0).get<long long>();
        const auto to = p.at(1).get<long long>();
        if (from < 0 || to < 0) throw ValidationError("negative token in mapping");
        if (!pairs.emplace(static_cast<Token>(from), static_cast<Token>(to)).second)
          throw ValidationError("duplicate source token in mapping");
      }
      m.maps.push_back(std::move(pairs));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed mapping JSON: ") + e.what());
  }
  m.check();
  return m;
}

void save_mapping(const std::filesystem::path& path, const TokenMapping& m) {
  write_file(path, mapping_to_json(m));
}

TokenMapping load_mapping(const std::filesystem::path& path) { return mapping_from_json(read_file(path)); }

void write_events(std::ostream& out, const std::vector<InteractionEvent>& events) {
  out << "user\titem\tts\n";
  for (const auto& e : events) out << e.user << '\t' << e.item << '\t' << e.timestamp << '\n';
}

std::vector<InteractionEvent> read_events(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("event log is empty (missing header)");
  strip_cr(line);
  if (line != "user\titem\tts") throw IoError("event log header must be 'user\\titem\\tts'");
  std::vector<InteractionEvent> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw IoError("event log line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    InteractionEvent e;
    e.user = line.substr(0, t1);
    e.item = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string ts = line.substr(t2 + 1);
    try {
      std::size_t used = 0;
      e.timestamp = std::stoll(ts, &used);
      if (used != ts.size()) throw std::invalid_argument(ts);
    } catch (const std::logic_error&) {
      throw IoError("event log line " + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
    }
    if (e.timestamp < 0)
      throw ValidationError("event log line " + std::to_string(line_no) + ": negative timestamp");
    events.push_back(std::move(e));
  }
  return events;
}

void save_events(const std::filesystem::path& path, const std::vector<InteractionEvent>& events) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  write_events(out, events);
}

std::vector<InteractionEvent> load_events(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_events(in);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of binary stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("unexpected end of binary stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

namespace {
constexpr char kEmbeddingMagic[8] = {'S', 'I', 'D', 'E', 'M', 'B', '0', '1'};
}

void write_embeddings(std::ostream& out, const ItemEmbeddingTable& table) {
  out.write(kEmbeddingMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(table.size()));
  put_u32(out, static_cast<std::uint32_t>(table.empty() ? 0 : table.dim()));
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& id = table.ids()[r];
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (Eigen::Index c = 0; c < table.dim(); ++c) {
      const auto f = static_cast<float>(table.vectors()(static_cast<Eigen::Index>(r), c));
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
}

ItemEmbeddingTable read_embeddings(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kEmbeddingMagic, 8) != 0)
    throw IoError("embedding file: bad magic (expected SIDEMB01)");
  const std::uint32_t count = get_u32(in);
  const std::uint32_t dim = get_u32(in);
  if (count > 0 && dim == 0) throw IoError("embedding file: dim is 0");
  std::vector<ItemId> ids;
  ids.reserve(count);
  ItemEmbeddingTable::Matrix vectors(count, dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t len = get_u32(in);
    std::string id(len, '\0');
    if (len > 0 && !in.read(id.data(), len)) throw IoError("embedding file: truncated id");
    ids.push_back(std::move(id));
    for (std::uint32_t c = 0; c < dim; ++c) vectors(r, c) = std::bit_cast<float>(get_u32(in));
  }
  if (count == 0) return {};
  return ItemEmbeddingTable(std::move(ids), std::move(vectors));
}

void save_embeddings(const std::filesystem::path& path, const ItemEmbeddingTable& table) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  write_embeddings(out, table);
}

ItemEmbeddingTable load_embeddings(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_embeddings(in);
}

std::string read_file(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << content;
}

}  // namespace sidalign::io
