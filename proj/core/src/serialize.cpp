#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "stackcast/error.hpp"
#include "stackcast/model.hpp"
#include "stackcast/serialize.hpp"

namespace stackcast {

namespace {
constexpr std::string_view kMagic = "stackcast-model";
constexpr int kVersion = 1;

std::string expect_line(std::istream& in, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("model file truncated: expected " + std::string(what));
  return line;
}
}  // namespace

std::string hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex_double(std::string_view s) {
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size()) throw ValidationError("bad number '" + buf + "'");
  return v;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_parameters(std::ostream& out, std::string_view kind, std::string_view descriptor,
                      std::span<diff::Parameter* const> params) {
  out << kMagic << ' ' << kVersion << ' ' << kind << '\n';
  out << descriptor << '\n';
  out << "params " << params.size() << '\n';
  for (const auto* p : params) {
    out << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) out << (j ? " " : "") << hex_double(p->value(i, j));
      out << '\n';
    }
  }
  out << "end\n";
}

std::string read_descriptor(std::istream& in, std::string_view kind) {
  std::istringstream head(expect_line(in, "header"));
  std::string magic, k;
  int version = 0;
  head >> magic >> version >> k;
  if (magic != kMagic) throw ValidationError("not a stackcast model file");
  if (version != kVersion) throw ValidationError("unsupported model file version " + std::to_string(version));
  if (k != kind) throw ValidationError("model file holds '" + k + "', expected '" + std::string(kind) + "'");
  return expect_line(in, "descriptor");
}

std::string read_parameters(std::istream& in, std::string_view kind, std::span<diff::Parameter* const> params) {
  const std::string descriptor = read_descriptor(in, kind);
  std::istringstream count_line(expect_line(in, "parameter count"));
  std::string tag;
  std::size_t count = 0;
  count_line >> tag >> count;
  if (tag != "params" || count != params.size())
    throw ValidationError("model file has " + std::to_string(count) + " parameters, architecture needs " +
                          std::to_string(params.size()));
  for (auto* p : params) {
    std::istringstream h(expect_line(in, "parameter header"));
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    h >> name >> rows >> cols;
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols())
      throw ValidationError("model file parameter '" + name + "' does not match '" + p->name + "'");
    for (Eigen::Index i = 0; i < rows; ++i) {
      std::istringstream row(expect_line(in, "parameter row"));
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::string cell;
        if (!(row >> cell)) throw ValidationError("model file row too short in '" + name + "'");
        p->value(i, j) = parse_hex_double(cell);
      }
    }
    p->zero_grad();
  }
  if (expect_line(in, "end marker") != "end") throw ValidationError("model file missing end marker");
  return descriptor;
}

}  // namespace stackcast
