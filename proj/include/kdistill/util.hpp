#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdistill/errors.hpp"

namespace kdistill {

using json = nlohmann::json;

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& rows);

// FNV-1a of a file's bytes, hex-encoded; used in run manifests.
std::string file_hash(const std::string& path);
std::string hash_hex(std::uint64_t h);

inline void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

}  // namespace kdistill
