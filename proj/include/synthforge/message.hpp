#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace synthforge {

enum class Role { kSystem, kUser, kAssistant, kTool };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view name);

struct Message {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

using Messages = std::vector<Message>;

}  // namespace synthforge
