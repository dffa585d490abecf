#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hetreg {

// Write to `<path>.tmp` then rename over `path`, so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

std::string read_file(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

std::string sha1_hex(std::string_view data);
// SHA-1 over "blob <len>\0<content>", i.e. what `git hash-object` prints.
std::string git_blob_hash(std::string_view content);

}  // namespace hetreg
