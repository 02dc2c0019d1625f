#include "seqgeo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <functional>
#include <map>

#include "seqgeo/error.hpp"
#include "seqgeo/io.hpp"
#include "le_bytes.hpp"

namespace seqgeo::io {
namespace {

using nlohmann::json;

using Setter = std::function<void(RunConfig&, const json&)>;

// Setters throw std::string on a type error; the caller collects them.
bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

Setter count(std::size_t tfam::TfamConfig::*field) {
  return [field](RunConfig& c, const json& v) {
    if (!non_negative_integer(v)) throw std::string("expected a non-negative integer");
    c.model.*field = v.get<std::size_t>();
  };
}

Setter count(std::size_t train::TrainConfig::*field) {
  return [field](RunConfig& c, const json& v) {
    if (!non_negative_integer(v)) throw std::string("expected a non-negative integer");
    c.train.*field = v.get<std::size_t>();
  };
}

Setter flag(bool tfam::TfamConfig::*field) {
  return [field](RunConfig& c, const json& v) {
    if (!v.is_boolean()) throw std::string("expected a boolean");
    c.model.*field = v.get<bool>();
  };
}

Setter flag(bool train::TrainConfig::*field) {
  return [field](RunConfig& c, const json& v) {
    if (!v.is_boolean()) throw std::string("expected a boolean");
    c.train.*field = v.get<bool>();
  };
}

Setter real(double train::TrainConfig::*field) {
  return [field](RunConfig& c, const json& v) {
    if (!v.is_number()) throw std::string("expected a number");
    c.train.*field = v.get<double>();
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seq_len", count(&tfam::TfamConfig::seq_len)},
      {"dim", count(&tfam::TfamConfig::dim)},
      {"n_heads", count(&tfam::TfamConfig::n_heads)},
      {"n_layers", count(&tfam::TfamConfig::n_layers)},
      {"masking_mode",
       [](RunConfig& c, const json& v) {
         if (!v.is_string()) throw std::string("expected \"strict\" or \"paper_literal\"");
         try {
           c.model.masking = tfam::masking_mode_from_string(v.get<std::string>());
         } catch (const DomainError&) {
           throw std::string("expected \"strict\" or \"paper_literal\"");
         }
       }},
      {"residual", flag(&tfam::TfamConfig::residual)},
      {"scale_per_head", flag(&tfam::TfamConfig::scale_per_head)},
      {"positional_encoding", flag(&tfam::TfamConfig::positional_encoding)},
      {"gamma", real(&train::TrainConfig::gamma)},
      {"batch_size", count(&train::TrainConfig::batch_size)},
      {"epochs", count(&train::TrainConfig::epochs)},
      {"lr_start", real(&train::TrainConfig::lr_start)},
      {"lr_end", real(&train::TrainConfig::lr_end)},
      {"decay_start_epoch", count(&train::TrainConfig::decay_start_epoch)},
      {"weight_decay", real(&train::TrainConfig::weight_decay)},
      {"decoupled_weight_decay", flag(&train::TrainConfig::decoupled_weight_decay)},
      {"max_dropped", count(&train::TrainConfig::max_dropped)},
      {"seed",
       [](RunConfig& c, const json& v) {
         if (!non_negative_integer(v)) throw std::string("expected a non-negative integer");
         c.train.seed = v.get<std::uint64_t>();
       }},
      {"train_aerial", flag(&train::TrainConfig::train_aerial)},
      {"max_steps", count(&train::TrainConfig::max_steps)},
  };
  return table;
}

}  // namespace

json to_json(const tfam::TfamConfig& cfg) {
  return {{"seq_len", cfg.seq_len},
          {"dim", cfg.dim},
          {"n_heads", cfg.n_heads},
          {"n_layers", cfg.n_layers},
          {"masking_mode", std::string(tfam::to_string(cfg.masking))},
          {"residual", cfg.residual},
          {"scale_per_head", cfg.scale_per_head},
          {"positional_encoding", cfg.positional_encoding}};
}

json to_json(const train::TrainConfig& cfg) {
  return {{"gamma", cfg.gamma},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"lr_start", cfg.lr_start},
          {"lr_end", cfg.lr_end},
          {"decay_start_epoch", cfg.decay_start_epoch},
          {"weight_decay", cfg.weight_decay},
          {"decoupled_weight_decay", cfg.decoupled_weight_decay},
          {"max_dropped", cfg.max_dropped},
          {"seed", cfg.seed},
          {"train_aerial", cfg.train_aerial},
          {"max_steps", cfg.max_steps}};
}

json to_json(const RunConfig& cfg) {
  json j = to_json(cfg.model);
  j.update(to_json(cfg.train));
  return j;
}

RunConfig apply_run_config(const json& flat, RunConfig base) {
  if (!flat.is_object()) throw DomainError("run config must be a flat JSON object");
  std::vector<std::string> problems;
  for (const auto& [key, value] : flat.items()) {
    const auto it = setters().find(key == "J" ? "max_dropped" : key);
    if (it == setters().end()) {
      problems.push_back(key + ": unknown key");
      continue;
    }
    try {
      it->second(base, value);
    } catch (const std::string& why) {
      problems.push_back(key + ": " + why);
    }
  }
  auto check = [&](auto&& validate) {
    try {
      validate();
    } catch (const DomainError& e) {
      problems.push_back(e.what());
    }
  };
  check([&] { base.model.validate(); });
  check([&] { base.train.validate(); });
  if (base.train.max_dropped >= base.model.seq_len) {
    problems.push_back("max_dropped: must be smaller than seq_len");
  }
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DomainError(msg);
  }
  return base;
}

tfam::TfamConfig tfam_config_from_json(const json& j) {
  RunConfig base;
  base.train.max_dropped = 0;
  return apply_run_config(j, base).model;
}

train::TrainConfig train_config_from_json(const json& j) {
  RunConfig base;
  base.model.dim = 2;
  base.model.n_heads = 1;
  return apply_run_config(j, base).train;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  tfam::check_params(ckpt.params.tfam, ckpt.model);
  json shapes = json::array();
  std::string blob;
  ckpt.params.for_each([&](const Matrix& m) {
    shapes.push_back({m.rows(), m.cols()});
    for (double v : m.data()) put_u32(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  });
  const json header = {{"format_version", kCheckpointVersion},
                       {"model", to_json(ckpt.model)},
                       {"train", to_json(ckpt.train)},
                       {"step", ckpt.step},
                       {"dtype", "f32"},
                       {"tensors", shapes}};
  const std::string text = header.dump();
  std::string buf(kCheckpointMagic, 4);
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<std::uint32_t>(text.size()));
  buf += text;
  buf += blob;
  write_file(path, buf);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::string where = path.string() + ": ";
  if (buf.size() < 12 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) throw IoError(where + "bad magic");
  if (get_u32(p + 4) != kCheckpointVersion) throw IoError(where + "version mismatch");
  const std::size_t header_len = get_u32(p + 8);
  if (buf.size() < 12 + header_len) throw IoError(where + "truncated header");
  json header;
  try {
    header = json::parse(buf.substr(12, header_len));
  } catch (const json::parse_error& e) {
    throw IoError(where + "malformed header: " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.model = tfam_config_from_json(header.at("model"));
    RunConfig base;
    base.model = ckpt.model;
    ckpt.train = apply_run_config(header.at("train"), base).train;
    ckpt.step = header.at("step").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError(where + "bad header: " + e.what());
  } catch (const DomainError& e) {
    throw IoError(where + e.what());
  }
  ckpt.params = train::init_model(ckpt.model, 0);
  const auto tensors = ckpt.params.tensors();
  const json& shapes = header.value("tensors", json::array());
  if (shapes.size() != tensors.size()) throw IoError(where + "tensor count does not match the model config");
  std::size_t offset = 12 + header_len;
  std::size_t expected = 0;
  for (const Matrix* m : tensors) expected += m->size() * 4;
  if (buf.size() - offset != expected) {
    throw IoError(where + "payload length mismatch (" + std::to_string(buf.size() - offset) + " bytes, expected " +
                  std::to_string(expected) + ")");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Matrix& m = *tensors[i];
    if (shapes[i] != json::array({m.rows(), m.cols()})) throw IoError(where + "tensor " + std::to_string(i) + " shape mismatch");
    for (double& v : m.data()) {
      v = std::bit_cast<float>(get_u32(p + offset));
      offset += 4;
    }
  }
  return ckpt;
}

}  // namespace seqgeo::io
