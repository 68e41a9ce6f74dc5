#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "ihid/diffusion.hpp"
#include "ihid/iql.hpp"

namespace ihid {

// Config <-> JSON. Reading applies only the keys present (a file may override
// a subset of the defaults); unknown keys are rejected with a ParseError so
// typos never pass silently.
void to_json(nlohmann::json& j, const IqlConfig& c);
void from_json(const nlohmann::json& j, IqlConfig& c);
void to_json(nlohmann::json& j, const DiffusionConfig& c);
void from_json(const nlohmann::json& j, DiffusionConfig& c);

std::string to_string(QBackend b);
QBackend qbackend_from_string(const std::string& s);

// Throws ParseError naming the first key of j not in `allowed`.
void check_json_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                     const std::string& context);

// Checkpoints are a JSON manifest at `path` plus a raw parameter blob at
// `path + ".bin"`: every tensor appended row-major as little-endian 32-bit
// floats, in the order listed under "tensors" (name, rows, cols, offset).
// The manifest also carries the model kind, the training config, and the
// seed, so loading rebuilds the architecture before filling in values.
void save_qfunction_checkpoint(const std::string& path, const QFunction& q,
                               const IqlConfig& cfg);
QFunction load_qfunction_checkpoint(const std::string& path, IqlConfig* cfg_out = nullptr);

void save_diffusion_checkpoint(const std::string& path, const DiffusionModel& m);
DiffusionModel load_diffusion_checkpoint(const std::string& path);

}  // namespace ihid
