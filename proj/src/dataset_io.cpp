#include "synthforge/dataset_io.hpp"

#include <fstream>
#include <functional>

#include "synthforge/errors.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;

namespace {

void write_lines(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot move " + tmp.string() + ": " + ec.message());
}

}  // namespace

std::size_t write_dataset(std::span<const Conversation> conversations,
                          const std::filesystem::path& path) {
  for (const auto& c : conversations) c.validate();
  write_lines(path, [&](std::ostream& out) {
    for (const auto& c : conversations) out << c.to_json().dump() << '\n';
  });
  return conversations.size();
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kIoError, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<Conversation> read_dataset(const std::filesystem::path& path) {
  std::vector<Conversation> out;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path)) {
    ++lineno;
    try {
      out.push_back(Conversation::from_json(j));
    } catch (const Error& ex) {
      throw Error(ErrorCode::kIoError, path.string() + ": record " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

void write_jsonl(std::span<const json> records, const std::filesystem::path& path) {
  write_lines(path, [&](std::ostream& out) {
    for (const auto& r : records) out << r.dump() << '\n';
  });
}

}  // namespace synthforge
