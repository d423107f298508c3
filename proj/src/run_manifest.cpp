#include "volta/run_manifest.hpp"

#include "volta/error.hpp"
#include "volta/file_io.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace volta {

std::string hash_path(const fs::path& path)
{
    std::error_code ec;
    if (fs::is_directory(path, ec)) return sha256_tree(path);
    if (fs::is_regular_file(path, ec)) return sha256_file(path);
    throw IoError("cannot hash " + path.string() + ": no such file or directory");
}

void hash_outputs(RunManifest& manifest)
{
    for (auto& out : manifest.outputs) out.sha256 = hash_path(out.path);
}

namespace {

ordered_json hashed_list(const std::vector<HashedPath>& items)
{
    ordered_json list = ordered_json::array();
    for (const auto& item : items) list.push_back({{"path", item.path}, {"sha256", item.sha256}});
    return list;
}

std::vector<HashedPath> parse_hashed_list(const ordered_json& list)
{
    std::vector<HashedPath> items;
    for (const auto& item : list) items.push_back({item.at("path").get<std::string>(), item.at("sha256").get<std::string>()});
    return items;
}

}  // namespace

std::string manifest_to_json(const RunManifest& manifest)
{
    ordered_json j;
    j["tool_version"] = manifest.tool_version;
    j["command"] = manifest.command;
    j["argv"] = manifest.argv;
    j["seed"] = manifest.seed;
    j["config"] = manifest.config;
    j["inputs"] = hashed_list(manifest.inputs);
    j["outputs"] = hashed_list(manifest.outputs);
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text)
{
    try {
        const ordered_json j = ordered_json::parse(text);
        RunManifest m;
        m.tool_version = j.at("tool_version").get<std::string>();
        m.command = j.at("command").get<std::string>();
        m.argv = j.at("argv").get<std::vector<std::string>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config = j.at("config");
        m.inputs = parse_hashed_list(j.at("inputs"));
        m.outputs = parse_hashed_list(j.at("outputs"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed run manifest: ") + e.what());
    }
}

void write_manifest(const RunManifest& manifest, const fs::path& path)
{
    write_text_file(path, manifest_to_json(manifest));
}

RunManifest read_manifest(const fs::path& path)
{
    const auto bytes = read_file_bytes(path);
    return manifest_from_json(std::string(bytes.begin(), bytes.end()));
}

fs::path manifest_path_for(const fs::path& artifact)
{
    return fs::path(artifact.string() + ".manifest.json");
}

std::vector<std::string> hash_mismatches(const std::vector<HashedPath>& recorded, const std::vector<HashedPath>& current)
{
    std::vector<std::string> bad;
    for (const auto& r : recorded) {
        bool matched = false;
        for (const auto& c : current) {
            if (c.path == r.path) {
                matched = c.sha256 == r.sha256;
                break;
            }
        }
        if (!matched) bad.push_back(r.path);
    }
    return bad;
}

}  // namespace volta
