#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "clinlm/encoder.hpp"

namespace clinlm {

namespace {

constexpr const char* kMagic = "clinlm-checkpoint";
constexpr int kFormatVersion = 1;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_doubles(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      auto bits = std::bit_cast<std::uint64_t>(m(r, c));
      unsigned char bytes[8];
      for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xFF);
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
}

void read_doubles(std::istream& in, Matrix& m, const std::string& name) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw std::runtime_error("checkpoint truncated in tensor " + name);
      }
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
      m(r, c) = std::bit_cast<double>(bits);
    }
  }
}

std::string read_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint truncated in header");
  return line;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Parameters& params) {
  const auto& c = params.config;
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "vocab_size=" << c.vocab_size << '\n';
  out << "hidden_dim=" << c.hidden_dim << '\n';
  out << "n_layers=" << c.n_layers << '\n';
  out << "n_heads=" << c.n_heads << '\n';
  out << "ff_dim=" << c.ff_dim << '\n';
  out << "max_positions=" << c.max_positions << '\n';
  out << "type_vocab_size=" << c.type_vocab_size << '\n';
  out << "dropout_rate=" << fmt_double(c.dropout_rate) << '\n';
  out << "layernorm_epsilon=" << fmt_double(c.layernorm_epsilon) << '\n';
  out << "heads " << params.heads.size() << '\n';
  for (const auto& [name, head] : params.heads) {
    out << name << ' ' << to_string(head.kind) << ' ' << head.n_labels() << '\n';
  }
  const auto tensors = params.tensors();
  out << "tensors " << tensors.size() << '\n';
  for (const auto& [name, m] : tensors) {
    out << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
    write_doubles(out, *m);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

Parameters load_checkpoint(std::istream& in) {
  {
    std::istringstream head(read_line(in));
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic) throw std::runtime_error("not a clinlm checkpoint");
    if (version != kFormatVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, std::string> fields;
  for (int i = 0; i < 9; ++i) {
    const std::string line = read_line(in);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed checkpoint config line: " + line);
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw std::runtime_error(std::string("checkpoint missing config field ") + key);
    return it->second;
  };
  EncoderConfig config;
  config.vocab_size = std::stoi(get("vocab_size"));
  config.hidden_dim = std::stoi(get("hidden_dim"));
  config.n_layers = std::stoi(get("n_layers"));
  config.n_heads = std::stoi(get("n_heads"));
  config.ff_dim = std::stoi(get("ff_dim"));
  config.max_positions = std::stoi(get("max_positions"));
  config.type_vocab_size = std::stoi(get("type_vocab_size"));
  config.dropout_rate = std::stod(get("dropout_rate"));
  config.layernorm_epsilon = std::stod(get("layernorm_epsilon"));

  Rng shape_rng(0);
  Parameters params = Parameters::initialize(config, shape_rng);

  std::size_t n_heads = 0;
  {
    std::istringstream line(read_line(in));
    std::string word;
    if (!(line >> word >> n_heads) || word != "heads") throw std::runtime_error("malformed checkpoint head list");
  }
  for (std::size_t i = 0; i < n_heads; ++i) {
    std::istringstream line(read_line(in));
    std::string name;
    std::string kind;
    int n_labels = 0;
    if (!(line >> name >> kind >> n_labels)) throw std::runtime_error("malformed checkpoint head entry");
    params.add_head(name, parse_head_kind(kind), n_labels, shape_rng);
  }

  auto tensors = params.tensors();
  std::size_t n_tensors = 0;
  {
    std::istringstream line(read_line(in));
    std::string word;
    if (!(line >> word >> n_tensors) || word != "tensors") throw std::runtime_error("malformed checkpoint tensor count");
  }
  if (n_tensors != tensors.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(n_tensors) + " tensors, expected " +
                             std::to_string(tensors.size()));
  }
  for (auto& [expected_name, m] : tensors) {
    std::istringstream line(read_line(in));
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(line >> name >> rows >> cols)) throw std::runtime_error("malformed checkpoint tensor header");
    if (name != expected_name || rows != m->rows() || cols != m->cols()) {
      throw std::runtime_error("checkpoint tensor " + name + " does not match expected " + expected_name);
    }
    read_doubles(in, *m, name);
    if (in.get() != '\n') throw std::runtime_error("checkpoint tensor " + name + " has trailing bytes");
  }
  return params;
}

void save_checkpoint_file(const std::string& path, const Parameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_checkpoint(out, params);
}

Parameters load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace clinlm
