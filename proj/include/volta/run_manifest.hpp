#pragma once

// JSON record of a CLI invocation: the fully resolved argument list, hashes of
// every input and output, and the tool version. Written before any training
// starts and completed with output hashes afterwards.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace volta {

inline constexpr const char* kToolVersion = "voltavision 1.0.0";

struct HashedPath {
    std::string path;
    std::string sha256;  // empty until known

    friend bool operator==(const HashedPath&, const HashedPath&) = default;
};

struct RunManifest {
    std::string command;
    /// Replayable argument vector (without the program name) with every
    /// default spelled out.
    std::vector<std::string> argv;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::vector<HashedPath> inputs;
    std::vector<HashedPath> outputs;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
};

/// sha256_file for regular files, sha256_tree for directories.
/// Throws IoError when the path does not exist.
std::string hash_path(const std::filesystem::path& path);

/// Fills every output hash from disk.
void hash_outputs(RunManifest& manifest);

std::string manifest_to_json(const RunManifest& manifest);
/// Throws IoError on malformed JSON or missing fields.
RunManifest manifest_from_json(const std::string& text);

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

/// "<artifact>.manifest.json"
std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);

/// Entries of `recorded` whose hash differs from `current` (matched by path).
std::vector<std::string> hash_mismatches(const std::vector<HashedPath>& recorded,
                                         const std::vector<HashedPath>& current);

}  // namespace volta
