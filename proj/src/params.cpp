#include "isonet/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace isonet::ad {
namespace {

constexpr char kMagic[8] = {'I', 'S', 'N', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  return v;
}

}  // namespace

void ParamStore::add(const std::string& name, Matrix init) {
  if (values_.count(name) != 0) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  order_.push_back(name);
  values_.emplace(name, std::move(init));
}

bool ParamStore::contains(const std::string& name) const {
  return values_.count(name) != 0;
}

const Matrix& ParamStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Matrix& ParamStore::get(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : values_) n += static_cast<std::size_t>(m.size());
  return n;
}

void ParamStore::add_uniform(const std::string& name, Eigen::Index rows,
                             Eigen::Index cols, Eigen::Index fan_in,
                             std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Row-major fill keeps the draw order independent of Eigen's storage.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  add(name, std::move(m));
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (order_ != other.order_) return false;
  for (const auto& name : order_) {
    const Matrix& a = get(name);
    const Matrix& b = other.get(name);
    if (a.rows() != b.rows() || a.cols() != b.cols() || a != b) return false;
  }
  return true;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store, bool trainable) {
  for (const auto& name : store.names()) {
    vars_.emplace(name, trainable ? tape.variable(store.get(name))
                                  : tape.constant(store.get(name)));
  }
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("unbound parameter: " + name);
  return it->second;
}

GradMap BoundParams::gradients() const {
  GradMap out;
  for (const auto& [name, v] : vars_) {
    const Matrix& g = v.grad();
    out.emplace(name, g.size() == v.value().size()
                          ? g
                          : Matrix::Zero(v.rows(), v.cols()));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& name : params.names()) {
    const Matrix& m = params.get(name);
    manifest["tensors"].push_back(
        {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& name : params.names()) {
    const Matrix& m = params.get(name);
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const std::uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint: truncated manifest");
  const auto manifest = nlohmann::json::parse(text);

  Checkpoint ck;
  ck.meta = manifest.at("meta");
  for (const auto& t : manifest.at("tensors")) {
    Matrix m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) {
      throw std::runtime_error("checkpoint: truncated tensor " +
                               t.at("name").get<std::string>());
    }
    ck.params.add(t.at("name").get<std::string>(), std::move(m));
  }
  return ck;
}

void validate_shapes(const ParamStore& loaded, const ParamStore& expected) {
  for (const auto& name : expected.names()) {
    if (!loaded.contains(name)) {
      throw std::runtime_error("checkpoint is missing parameter " + name);
    }
    const Matrix& a = loaded.get(name);
    const Matrix& b = expected.get(name);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      std::ostringstream os;
      os << "checkpoint parameter " << name << " has shape " << a.rows() << "x"
         << a.cols() << ", model expects " << b.rows() << "x" << b.cols();
      throw std::runtime_error(os.str());
    }
  }
  if (loaded.size() != expected.size()) {
    throw std::runtime_error("checkpoint has parameters the model does not use");
  }
}

GradCheckResult grad_check(const ScalarBuilder& f, const ParamStore& x0,
                           double eps, double floor) {
  GradMap analytic;
  double value = 0.0;
  {
    Tape tape;
    BoundParams bound(tape, x0, /*trainable=*/true);
    Var y = f(tape, bound);
    tape.backward(y);
    analytic = bound.gradients();
    value = y.value()(0, 0);
  }

  auto eval = [&f](const ParamStore& p) {
    Tape tape;
    BoundParams bound(tape, p, /*trainable=*/false);
    return f(tape, bound).value()(0, 0);
  };

  GradCheckResult res;
  res.value = value;
  ParamStore probe = x0;
  for (const auto& name : x0.names()) {
    Matrix& m = probe.get(name);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + eps;
      const double up = eval(probe);
      m.data()[i] = orig - eps;
      const double down = eval(probe);
      m.data()[i] = orig;

      const double fd = (up - down) / (2.0 * eps);
      const double an = analytic.at(name).data()[i];
      const double rel = std::abs(an - fd) / (std::abs(fd) + floor);
      ++res.coordinates;
      res.max_abs_error = std::max(res.max_abs_error, std::abs(an - fd));
      if (rel > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = std::max(res.max_rel_error, rel);
        if (rel >= res.max_rel_error) {
          res.worst_param = name;
          res.worst_index = i;
          res.analytic = an;
          res.numeric = fd;
        }
      }
    }
  }
  return res;
}

}  // namespace isonet::ad
