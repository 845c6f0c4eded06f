#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "licda/model.hpp"

namespace licda {

inline constexpr int kCheckpointVersion = 1;

// Binary container: magic "LICK", version byte, a JSON metadata block and a
// table of named float32 tensors stored as raw little-endian bytes, so a
// save/load cycle is bit-exact.
struct Checkpoint {
    nlohmann::ordered_json meta;
    std::vector<std::pair<std::string, std::pair<Shape, std::vector<float>>>> tensors;

    const std::pair<Shape, std::vector<float>>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
    void add(const std::string& name, Shape shape, std::vector<float> values) {
        tensors.emplace_back(name, std::make_pair(std::move(shape), std::move(values)));
    }
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Model <-> checkpoint. Extra metadata (train state, logs, ...) rides along in
// ck.meta; extra tensors (optimizer moments) can be added after snapshotting.
Checkpoint snapshot_model(CodecModel<float>& model);
CodecModel<float> restore_model(const Checkpoint& ck);

}  // namespace licda
