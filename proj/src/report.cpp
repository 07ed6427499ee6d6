#include "structmerge/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace structmerge {

std::string format_g12(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", value);
    return buf;
}

std::uint64_t config_hash(const std::string& canonical_config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_config) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << content;
    if (!os) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_manifest(const std::string& report_path, const std::vector<std::string>& invocation,
                    const std::string& canonical_config, std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["invocation"] = invocation;
    j["config"] = canonical_config;
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(config_hash(canonical_config)));
    j["config_hash"] = hash_hex;
    j["seed"] = seed;
    write_text_file(report_path + ".manifest.json", j.dump(2) + "\n");
}

}  // namespace structmerge
