#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "synthforge/conversation.hpp"

namespace synthforge {

/// Writes one JSON conversation per line. Every conversation is validated
/// before the file is touched; the file is replaced atomically. Returns the
/// record count. Throws Error(kInvalidConversation) or Error(kIoError).
std::size_t write_dataset(std::span<const Conversation> conversations,
                          const std::filesystem::path& path);

/// Throws Error(kIoError) with the offending line number on bad input.
std::vector<Conversation> read_dataset(const std::filesystem::path& path);

/// Generic line-delimited JSON helpers used for non-conversation records.
void write_jsonl(std::span<const nlohmann::json> records, const std::filesystem::path& path);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace synthforge
