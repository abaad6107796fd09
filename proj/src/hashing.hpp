#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace probeforge {

std::string sha1_hex(std::string_view bytes);

// Same digest `git hash-object` prints for a file with these contents.
std::string git_blob_hash(std::string_view bytes);
std::string git_blob_hash_file(const std::filesystem::path& file);

}  // namespace probeforge
