#ifndef SILT_IO_HPP
#define SILT_IO_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace silt::io {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view text)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest decimal text that reads back to the same double ("nan", "inf", "-inf" for non-finite).
inline std::string format_double(double x)
{
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc())
    throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

inline double parse_double(std::string_view s)
{
  if (s == "nan")
    return std::nan("");
  if (s == "inf")
    return INFINITY;
  if (s == "-inf")
    return -INFINITY;
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Minimal CSV table: a header row and rows of preformatted cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const
  {
    std::string s;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i)
          s += ',';
        s += cells[i];
      }
      s += '\n';
    };
    line(header);
    for (const auto& r : rows)
      line(r);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Static SVG line/scatter plots.

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool markers = true;
  bool line = false;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

inline std::string to_svg(const Plot& plot, int width = 640, int height = 420)
{
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, s.y[i]);
        y1 = std::max(y1, s.y[i]);
      }
  if (!(x1 >= x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  if (x1 == x0)
    x1 = x0 + 1;
  if (y1 == y0)
    y1 = y0 + 1;
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y0) / (y1 - y0) * ph; };
  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                width, height);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                ml, mt, pw, ph);
  s += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">", ml + pw / 2);
  s += buf + plot.title + "</text>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\">", ml + pw / 2, height - 10);
  s += buf + plot.x_label + "</text>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"15\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 15 %.1f)\">",
                mt + ph / 2, mt + ph / 2);
  s += buf + plot.y_label + "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3g</text>\n", px(xv),
                  mt + ph + 18, xv);
    s += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n", ml - 6, py(yv) + 4,
                  yv);
    s += buf;
  }
  int legend_row = 0;
  for (const auto& se : plot.series) {
    if (se.line && se.x.size() > 1) {
      s += "<polyline fill=\"none\" stroke=\"" + se.color + "\" points=\"";
      for (std::size_t i = 0; i < se.x.size(); ++i)
        if (std::isfinite(se.x[i]) && std::isfinite(se.y[i])) {
          std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(se.x[i]), py(se.y[i]));
          s += buf;
        }
      s += "\"/>\n";
    }
    if (se.markers)
      for (std::size_t i = 0; i < se.x.size(); ++i)
        if (std::isfinite(se.x[i]) && std::isfinite(se.y[i])) {
          std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", px(se.x[i]),
                        py(se.y[i]), se.color.c_str());
          s += buf;
        }
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">", ml + 10, mt + 16 + 16.0 * legend_row++,
                  se.color.c_str());
    s += buf + se.label + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

} // namespace silt::io

#endif // SILT_IO_HPP
