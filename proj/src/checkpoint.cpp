#include "raap/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "raap/errors.hpp"
#include "raap/store_format.hpp"

namespace raap {

namespace {

int to_int(std::string_view key, std::string_view value) {
  int v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("model." + std::string(key) + ": expected an integer, got '" + std::string(value) + "'");
  }
  return v;
}

}  // namespace

std::map<std::string, std::string> model_config_fields(const ModelConfig& c) {
  return {
      {"image_height", std::to_string(c.image_height)},
      {"image_width", std::to_string(c.image_width)},
      {"channels", std::to_string(c.channels)},
      {"patch", std::to_string(c.patch)},
      {"patch_pool", std::to_string(c.patch_pool)},
      {"d", std::to_string(c.d)},
      {"n_heads", std::to_string(c.n_heads)},
      {"d_ff", std::to_string(c.d_ff)},
      {"n_layers", std::to_string(c.n_layers)},
      {"k_max", std::to_string(c.k_max)},
      {"film_hidden", std::to_string(c.film_hidden)},
      {"gate_hidden", std::to_string(c.gate_hidden)},
      {"head_hidden", std::to_string(c.head_hidden)},
      {"eps", format_double(c.eps)},
      {"embedding_dim", std::to_string(c.embedding_dim)},
      {"weighting", to_string(c.weighting)},
      {"coupling", to_string(c.coupling)},
  };
}

void set_model_config_field(ModelConfig& c, std::string_view key, std::string_view value) {
  if (key == "image_height") {
    c.image_height = to_int(key, value);
  } else if (key == "image_width") {
    c.image_width = to_int(key, value);
  } else if (key == "channels") {
    c.channels = to_int(key, value);
  } else if (key == "patch") {
    c.patch = to_int(key, value);
  } else if (key == "patch_pool") {
    c.patch_pool = to_int(key, value);
  } else if (key == "d") {
    c.d = to_int(key, value);
  } else if (key == "n_heads") {
    c.n_heads = to_int(key, value);
  } else if (key == "d_ff") {
    c.d_ff = to_int(key, value);
  } else if (key == "n_layers") {
    c.n_layers = to_int(key, value);
  } else if (key == "k_max") {
    c.k_max = to_int(key, value);
  } else if (key == "film_hidden") {
    c.film_hidden = to_int(key, value);
  } else if (key == "gate_hidden") {
    c.gate_hidden = to_int(key, value);
  } else if (key == "head_hidden") {
    c.head_hidden = to_int(key, value);
  } else if (key == "eps") {
    try {
      c.eps = parse_double(value);
    } catch (const std::invalid_argument&) {
      throw ConfigError("model.eps: expected a number, got '" + std::string(value) + "'");
    }
  } else if (key == "embedding_dim") {
    c.embedding_dim = to_int(key, value);
  } else if (key == "weighting") {
    c.weighting = parse_weighting_rule(value);
  } else if (key == "coupling") {
    c.coupling = parse_attention_coupling(value);
  } else {
    throw ConfigError("unknown model key '" + std::string(key) + "'");
  }
}

void save_checkpoint(const AlignmentModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open '" + path.string() + "' for writing");
  }
  out << "raap-checkpoint 1\n";
  for (const auto& [key, value] : model_config_fields(model.config())) {
    out << "config " << key << ' ' << value << '\n';
  }
  for (const auto& p : model.parameters()) {
    const Matrix& v = p.tensor.value();
    out << "param " << p.name << ' ' << v.rows() << ' ' << v.cols();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      out << ' ' << format_double(v.data()[i]);
    }
    out << '\n';
  }
  if (!out) {
    throw ConfigError("failed writing '" + path.string() + "'");
  }
}

AlignmentModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  }
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != "raap-checkpoint 1") {
    throw ParseError(1, "missing raap-checkpoint header");
  }
  ++line_no;
  ModelConfig config;
  std::map<std::string, Matrix> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (in.eof()) {
      throw ParseError(line_no, "truncated record (missing end of line)");
    }
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "config") {
      std::string key;
      std::string value;
      if (!(fields >> key >> value)) {
        throw ParseError(line_no, "config line needs a key and a value");
      }
      try {
        set_model_config_field(config, key, value);
      } catch (const ConfigError& e) {
        throw ParseError(line_no, e.what());
      }
    } else if (kind == "param") {
      std::string name;
      Eigen::Index rows = 0;
      Eigen::Index cols = 0;
      if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) {
        throw ParseError(line_no, "bad parameter header");
      }
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::string token;
        if (!(fields >> token)) {
          throw ParseError(line_no, "parameter '" + name + "' has too few values");
        }
        try {
          m.data()[i] = parse_double(token);
        } catch (const std::invalid_argument&) {
          throw ParseError(line_no, "bad value '" + token + "' in parameter '" + name + "'");
        }
      }
      std::string extra;
      if (fields >> extra) {
        throw ParseError(line_no, "parameter '" + name + "' has too many values");
      }
      values[name] = std::move(m);
    } else if (!kind.empty()) {
      throw ParseError(line_no, "unknown record '" + kind + "'");
    }
  }
  AlignmentModel model(config, 0);
  if (values.size() != model.parameters().size()) {
    throw SchemaError("checkpoint holds " + std::to_string(values.size()) + " parameters, model expects " +
                      std::to_string(model.parameters().size()));
  }
  for (auto& p : model.parameters()) {
    const auto it = values.find(p.name);
    if (it == values.end()) {
      throw SchemaError("checkpoint lacks parameter '" + p.name + "'");
    }
    if (it->second.rows() != p.tensor.rows() || it->second.cols() != p.tensor.cols()) {
      throw SchemaError("parameter '" + p.name + "' has shape mismatch");
    }
    p.tensor.mutable_value() = it->second;
  }
  return model;
}

}  // namespace raap
