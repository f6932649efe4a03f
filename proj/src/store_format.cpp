#include "raap/store_format.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <system_error>

#include "raap/errors.hpp"

namespace raap {

namespace {

constexpr std::string_view kMagic = "raap-store";

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<double> parse_list(std::string_view field, std::size_t line, const char* what) {
  std::vector<double> values;
  if (field.empty()) {
    return values;
  }
  for (const auto token : split(field, ' ')) {
    try {
      values.push_back(parse_double(token));
    } catch (const std::invalid_argument&) {
      throw ParseError(line, std::string("bad number in ") + what + ": '" + std::string(token) + "'");
    }
  }
  return values;
}

int parse_int(std::string_view token, std::size_t line, const char* what) {
  int v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end || v < 0) {
    throw ParseError(line, std::string("bad ") + what + ": '" + std::string(token) + "'");
  }
  return v;
}

void write_list(std::ostream& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) {
      out << ' ';
    }
    out << format_double(data[i]);
  }
}

void check_text_field(const std::string& s, const char* what) {
  if (s.find_first_of("\t\n\r") != std::string::npos) {
    throw SchemaError(std::string(what) + " '" + s + "' contains a tab or newline");
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) {
    throw NumericError("cannot format value");
  }
  return std::string(buf, ptr);
}

double parse_double(std::string_view token) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (token.empty() || ec != std::errc() || ptr != end) {
    throw std::invalid_argument("not a number: " + std::string(token));
  }
  return v;
}

void write_store(std::ostream& out, const StoreContents& contents) {
  out << kMagic << '\t' << kStoreVersion << "\td_emb=" << contents.embedding_dim << "\tpayload=decimal\n";
  if (contents.entries.empty() && contents.depths.empty()) {
    out << kStoreVersion << "\tempty\n";
  }
  for (const auto& e : contents.entries) {
    check_text_field(e.id, "id");
    check_text_field(e.task, "task");
    if (e.embedding.size() != contents.embedding_dim) {
      throw SchemaError("entry '" + e.id + "' embedding size disagrees with the store header");
    }
    out << kStoreVersion << "\tentry\t" << e.id << '\t' << e.task << '\t' << e.image.height << '\t'
        << e.image.width << '\t' << e.image.channels() << '\t';
    write_list(out, e.image.pixels.data(), e.image.pixels.size());
    out << '\t';
    write_list(out, e.embedding.data(), e.embedding.size());
    out << '\t' << format_double(e.affordance.contact.x()) << ' ' << format_double(e.affordance.contact.y());
    out << '\t' << format_double(e.affordance.direction.x()) << ' '
        << format_double(e.affordance.direction.y()) << '\n';
  }
  for (const auto& d : contents.depths) {
    check_text_field(d.id, "id");
    const auto& k = d.intrinsics;
    out << kStoreVersion << "\tdepth\t" << d.id << '\t' << d.depth.height() << '\t' << d.depth.width() << '\t'
        << format_double(k.fx) << ' ' << format_double(k.fy) << ' ' << format_double(k.cx) << ' '
        << format_double(k.cy) << '\t';
    write_list(out, d.depth.depth.data(), d.depth.depth.size());
    out << '\n';
  }
}

StoreContents read_store(std::istream& in) {
  StoreContents contents;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  bool saw_empty = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (in.eof()) {
      throw ParseError(line_no, "truncated record (missing end of line)");
    }
    if (!saw_header) {
      const auto fields = split(line, '\t');
      if (fields.size() != 4 || fields[0] != kMagic) {
        throw ParseError(line_no, "missing raap-store header");
      }
      if (parse_int(fields[1], line_no, "version") != kStoreVersion) {
        throw ParseError(line_no, "unsupported store version " + std::string(fields[1]));
      }
      if (fields[2].substr(0, 6) != "d_emb=") {
        throw ParseError(line_no, "header lacks d_emb");
      }
      contents.embedding_dim = parse_int(fields[2].substr(6), line_no, "d_emb");
      if (fields[3] != "payload=decimal") {
        throw ParseError(line_no, "unsupported payload encoding '" + std::string(fields[3]) + "'");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() < 2 || parse_int(fields[0], line_no, "record version") != kStoreVersion) {
      throw ParseError(line_no, "bad record prefix");
    }
    if (fields[1] == "empty") {
      saw_empty = true;
      continue;
    }
    if (fields[1] == "entry") {
      if (fields.size() != 11) {
        throw ParseError(line_no, "entry record has " + std::to_string(fields.size()) + " fields, expected 11");
      }
      MemoryEntry e;
      e.id = std::string(fields[2]);
      e.task = std::string(fields[3]);
      const int h = parse_int(fields[4], line_no, "height");
      const int w = parse_int(fields[5], line_no, "width");
      const int c = parse_int(fields[6], line_no, "channels");
      const auto pixels = parse_list(fields[7], line_no, "pixels");
      if (pixels.size() != static_cast<std::size_t>(h) * w * c) {
        throw ParseError(line_no, "pixel payload has " + std::to_string(pixels.size()) + " values, expected " +
                                      std::to_string(static_cast<std::size_t>(h) * w * c));
      }
      e.image = FeatureImage(h, w, c);
      std::copy(pixels.begin(), pixels.end(), e.image.pixels.data());
      const auto emb = parse_list(fields[8], line_no, "embedding");
      if (static_cast<Eigen::Index>(emb.size()) != contents.embedding_dim) {
        throw SchemaError("line " + std::to_string(line_no) + ": embedding has " + std::to_string(emb.size()) +
                          " values, header says " + std::to_string(contents.embedding_dim));
      }
      e.embedding = Eigen::Map<const Eigen::VectorXd>(emb.data(), static_cast<Eigen::Index>(emb.size()));
      const auto contact = parse_list(fields[9], line_no, "contact");
      const auto direction = parse_list(fields[10], line_no, "direction");
      if (contact.size() != 2 || direction.size() != 2) {
        throw ParseError(line_no, "contact and direction need two values each");
      }
      e.affordance.contact = {contact[0], contact[1]};
      e.affordance.direction = {direction[0], direction[1]};
      contents.entries.push_back(std::move(e));
    } else if (fields[1] == "depth") {
      if (fields.size() != 7) {
        throw ParseError(line_no, "depth record has " + std::to_string(fields.size()) + " fields, expected 7");
      }
      DepthRecord d;
      d.id = std::string(fields[2]);
      const int h = parse_int(fields[3], line_no, "height");
      const int w = parse_int(fields[4], line_no, "width");
      const auto k = parse_list(fields[5], line_no, "intrinsics");
      if (k.size() != 4) {
        throw ParseError(line_no, "intrinsics need four values");
      }
      d.intrinsics = {k[0], k[1], k[2], k[3]};
      const auto values = parse_list(fields[6], line_no, "depth");
      if (values.size() != static_cast<std::size_t>(h) * w) {
        throw ParseError(line_no, "depth payload size mismatch");
      }
      d.depth.depth = Eigen::Map<const Matrix>(values.data(), h, w);
      contents.depths.push_back(std::move(d));
    } else {
      throw ParseError(line_no, "unknown record kind '" + std::string(fields[1]) + "'");
    }
  }
  if (!saw_header) {
    throw ParseError(line_no + 1, "empty file");
  }
  if (!saw_empty && contents.entries.empty() && contents.depths.empty()) {
    throw ParseError(line_no + 1, "store has no records and no empty marker");
  }
  return contents;
}

void write_store_file(const std::filesystem::path& path, const StoreContents& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open '" + path.string() + "' for writing");
  }
  write_store(out, contents);
  if (!out) {
    throw ConfigError("failed writing '" + path.string() + "'");
  }
}

StoreContents read_store_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open '" + path.string() + "'");
  }
  return read_store(in);
}

}  // namespace raap
