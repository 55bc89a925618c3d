#pragma once

// Provenance record written next to every CLI artifact.

#include "lac/error.hpp"

#include "json.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifndef LAC_GIT_REVISION
#define LAC_GIT_REVISION "unknown"
#endif

namespace lac::cli {

inline std::string sha256_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrorCode::io, 0, "cannot hash " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

/// Regular files under `path` (or `path` itself), sorted.
inline std::vector<std::string> files_under(const std::string& path)
{
    namespace fs = std::filesystem;
    std::vector<std::string> out;
    if (fs::is_regular_file(path)) {
        out.push_back(path);
    } else if (fs::is_directory(path)) {
        for (const auto& e : fs::recursive_directory_iterator(path))
            if (e.is_regular_file() && e.path().filename() != "run.json") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

class RunManifest {
public:
    explicit RunManifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    void set_config(const std::string& path) { config_ = path; }
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void add_input(const std::string& path) { inputs_.push_back(path); }
    void add_output(const std::string& path) { outputs_.push_back(path); }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["command"] = command_;
        j["config"] = config_.empty() ? nlohmann::json(nullptr) : nlohmann::json(config_);
        j["seed"] = seed_;
        j["git_revision"] = LAC_GIT_REVISION;
        j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        j["inputs"] = hashes(inputs_);
        j["outputs"] = hashes(outputs_);
        return j;
    }

    /// Writes to a temporary sibling and renames, so readers never see a
    /// partial manifest.
    void write(const std::string& path) const
    {
        namespace fs = std::filesystem;
        const std::string tmp = path + ".tmp";
        const std::string text = to_json().dump(2);
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw FormatError(FormatErrorCode::io, 0, "cannot write " + tmp);
            out << text << '\n';
            if (!out) throw FormatError(FormatErrorCode::io, 0, "short write to " + tmp);
        }
        std::error_code ec;
        fs::rename(tmp, path, ec);
        if (ec) throw FormatError(FormatErrorCode::io, 0, "cannot move manifest into place: " + ec.message());
    }

private:
    static nlohmann::json hashes(const std::vector<std::string>& paths)
    {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& p : paths)
            for (const auto& f : files_under(p)) j[f] = sha256_file(f);
        return j;
    }

    std::string command_;
    std::string config_;
    std::uint64_t seed_ = 0;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace lac::cli
