#include "archgrad/jsonio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "archgrad/status.hpp"

namespace ag {

std::string format_double(double v) {
  if (!std::isfinite(v)) {
    throw Error(Status::NonFinite, "cannot serialize non-finite value");
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void escape_string(const std::string& s, std::string& out) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

void emit(const nlohmann::json& j, std::string& out) {
  using value_t = nlohmann::json::value_t;
  switch (j.type()) {
    case value_t::null: out += "null"; break;
    case value_t::boolean: out += j.get<bool>() ? "true" : "false"; break;
    case value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      break;
    case value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      break;
    case value_t::number_float:
      out += format_double(j.get<double>());
      break;
    case value_t::string: escape_string(j.get<std::string>(), out); break;
    case value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& item : j) {
        if (!first) out += ',';
        first = false;
        emit(item, out);
      }
      out += ']';
      break;
    }
    case value_t::object: {
      // nlohmann's default object storage is a std::map: keys already sorted
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        escape_string(it.key(), out);
        out += ':';
        emit(it.value(), out);
      }
      out += '}';
      break;
    }
    default:
      throw Error(Status::Internal, "unsupported json type");
  }
}

}  // namespace

std::string canonical_json(const nlohmann::json& j) {
  std::string out;
  emit(j, out);
  out += '\n';
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Status::Io, "cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(Status::Io, "cannot write " + tmp);
    }
    out << content;
    if (!out.good()) {
      throw Error(Status::Io, "short write to " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error(Status::Io, "cannot rename " + tmp + " to " + path);
  }
}

}  // namespace ag
