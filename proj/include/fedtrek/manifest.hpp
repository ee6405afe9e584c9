// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Run manifests tie every produced artifact to the exact configuration,
// seeds, and input digests that made it. The manifest is the only file that
// carries a timestamp; all other outputs are byte-reproducible.

#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtrek/common.hpp"
#include "fedtrek/version.hpp"

namespace fedtrek {

// FNV-1a over the raw file bytes, rendered as fixed-width hex.
inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "file_digest: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    char hex[32];
    std::snprintf(hex, sizeof hex, "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(buf.str())));
    return hex;
}

inline std::string now_iso8601_utc() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

struct RunManifest {
    std::string command;                                       // subcommand that ran
    nlohmann::ordered_json config;                             // resolved settings incl. seeds
    std::vector<std::pair<std::string, std::string>> inputs;   // (path, digest)
    std::vector<std::string> outputs;                          // paths written
    nlohmann::ordered_json extra;                              // command facts (e.g. row counts)
};

inline void write_manifest(const RunManifest& m, const std::string& path) {
    nlohmann::ordered_json doc;
    doc["tool"] = std::string(kToolName);
    doc["version"] = std::string(kToolVersion);
    doc["command"] = m.command;
    doc["created_at"] = now_iso8601_utc();
    doc["config"] = m.config;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
    for (const auto& [p, digest] : m.inputs) {
        nlohmann::ordered_json o;
        o["path"] = p;
        o["digest"] = digest;
        inputs.push_back(std::move(o));
    }
    doc["inputs"] = std::move(inputs);
    doc["outputs"] = m.outputs;
    if (m.extra.is_object())
        for (const auto& [k, v] : m.extra.items()) doc[k] = v;
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "write_manifest: cannot open '" + path + "'");
    out << doc.dump(2) << '\n';
    require(out.good(), "write_manifest: write failed for '" + path + "'");
}

}  // namespace fedtrek
