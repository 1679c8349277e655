#include "robust_design/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "robust_design/errors.hpp"

namespace robust_design {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + s + "' is not a number");
  }
}

DesignFile from_parts(std::optional<Eigen::VectorXd> weights, std::optional<std::vector<int>> counts,
                      std::optional<int> n, std::size_t expected_size, const std::string& where) {
  try {
    std::optional<ExactDesign> exact;
    if (counts) {
      if (expected_size != 0 && counts->size() != expected_size) {
        throw ConfigError(where + ": counts have " + std::to_string(counts->size()) + " entries, expected " +
                          std::to_string(expected_size));
      }
      exact.emplace(*counts);
      if (n && *n != exact->n()) throw ConfigError(where + ": counts do not sum to n");
    }
    if (weights) {
      if (expected_size != 0 && static_cast<std::size_t>(weights->size()) != expected_size) {
        throw ConfigError(where + ": weights have " + std::to_string(weights->size()) + " entries, expected " +
                          std::to_string(expected_size));
      }
      if (!n && !exact) throw ConfigError(where + ": weights need 'n' (or counts)");
      return {Design(*weights, n ? *n : exact->n()), exact};
    }
    if (!exact) throw ConfigError(where + ": no weights or counts found");
    return {exact->as_design(), exact};
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

DesignFile read_json_design(std::istream& in, std::size_t expected_size, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(where + ": not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::optional<Eigen::VectorXd> weights;
  std::optional<std::vector<int>> counts;
  std::optional<int> n;
  try {
    if (j.contains("weights")) {
      const auto w = j.at("weights").get<std::vector<double>>();
      weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    }
    if (j.contains("counts")) counts = j.at("counts").get<std::vector<int>>();
    if (j.contains("n")) n = j.at("n").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return from_parts(std::move(weights), std::move(counts), n, expected_size, where);
}

DesignFile read_csv_design(std::istream& in, std::size_t expected_size, const std::string& where) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(where + ": empty file");
  const auto header = split(line, ',');
  auto column = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
    for (const char* name : names) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
    }
    return std::nullopt;
  };
  const auto xi_col = column({"xi"});
  const auto n_col = column({"n_i_rounded", "n_i"});
  if (!xi_col && !n_col) throw ConfigError(where + ": header needs an 'xi' or 'n_i' column");
  std::vector<double> w;
  std::vector<int> c;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw ConfigError(where + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(header.size()));
    }
    const std::string at = where + " row " + std::to_string(row);
    if (xi_col) w.push_back(parse_double(cells[*xi_col], at));
    if (n_col) {
      const double v = parse_double(cells[*n_col], at);
      if (v != std::floor(v) || v < 0) throw ConfigError(at + ": counts must be non-negative integers");
      c.push_back(static_cast<int>(v));
    }
  }
  std::optional<Eigen::VectorXd> weights;
  std::optional<std::vector<int>> counts;
  std::optional<int> n;
  if (n_col) {
    counts = c;
    int total = 0;
    for (int v : c) total += v;
    n = total;
  }
  if (xi_col) {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    // CSV text loses the last bits; restore the exact unit sum
    if (v.size() > 0 && v.sum() > 0.0 && std::abs(v.sum() - 1.0) < 1e-9) v /= v.sum();
    weights = v;
  }
  return from_parts(std::move(weights), std::move(counts), n, expected_size, where);
}

}  // namespace

DesignFile read_design(const std::filesystem::path& path, std::size_t expected_size) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open design file '" + path.string() + "'");
  const std::string where = "design file '" + path.string() + "'";
  if (path.extension() == ".csv") return read_csv_design(in, expected_size, where);
  return read_json_design(in, expected_size, where);
}

nlohmann::json design_to_json(const DesignSpace& space, const Design& design, const std::optional<ExactDesign>& exact) {
  nlohmann::json j;
  j["n"] = design.n();
  j["weights"] = std::vector<double>(design.weights().data(), design.weights().data() + design.weights().size());
  if (exact) j["counts"] = exact->counts();
  nlohmann::json support = nlohmann::json::array();
  for (std::size_t i = 0; i < design.size(); ++i) {
    const double w = design.weights()(static_cast<Eigen::Index>(i));
    if (w <= 0.0) continue;
    const Eigen::VectorXd x = space.point(i);
    nlohmann::json entry{{"index", i}, {"x", std::vector<double>(x.data(), x.data() + x.size())}, {"xi", w}};
    if (exact) entry["n_i"] = exact->counts()[i];
    support.push_back(entry);
  }
  j["support"] = support;
  return j;
}

void write_design_csv(std::ostream& os, const DesignSpace& space, const Design& design,
                      const std::optional<ExactDesign>& exact) {
  os << std::setprecision(17);
  os << "index";
  for (std::size_t d = 0; d < space.dim(); ++d) os << ",x" << (d + 1);
  os << ",xi,n_i_rounded\n";
  for (std::size_t i = 0; i < design.size(); ++i) {
    os << i;
    const Eigen::VectorXd x = space.point(i);
    for (Eigen::Index d = 0; d < x.size(); ++d) os << ',' << x(d);
    os << ',' << design.weights()(static_cast<Eigen::Index>(i)) << ',';
    if (exact) os << exact->counts()[i];
    os << '\n';
  }
}

void write_exact_csv(std::ostream& os, const DesignSpace& space, const ExactDesign& exact) {
  os << std::setprecision(17);
  os << "index";
  for (std::size_t d = 0; d < space.dim(); ++d) os << ",x" << (d + 1);
  os << ",n_i\n";
  for (std::size_t i = 0; i < exact.size(); ++i) {
    os << i;
    const Eigen::VectorXd x = space.point(i);
    for (Eigen::Index d = 0; d < x.size(); ++d) os << ',' << x(d);
    os << ',' << exact.counts()[i] << '\n';
  }
}

std::string weights_svg(const DesignSpace& space, const Design& design, const std::string& title) {
  const double width = 800.0, height = 400.0, left = 60.0, right = 20.0, top = 40.0, bottom = 50.0;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const double wmax = std::max(design.weights().maxCoeff(), 1e-12);
  const auto count = static_cast<double>(design.size());
  const double bar = plot_w / count;
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"16\">"
     << title << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = wmax * t / 4.0;
    const double y = top + plot_h * (1.0 - t / 4.0);
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
       << "font-size=\"11\">" << v << "</text>\n";
  }
  for (std::size_t i = 0; i < design.size(); ++i) {
    const double w = design.weights()(static_cast<Eigen::Index>(i));
    if (w <= 0.0) continue;
    const double h = plot_h * w / wmax;
    os << "<rect x=\"" << left + bar * static_cast<double>(i) << "\" y=\"" << top + plot_h - h << "\" width=\""
       << std::max(bar * 0.8, 0.5) << "\" height=\"" << h << "\" fill=\"steelblue\"/>\n";
  }
  const std::string axis_label = space.dim() == 1 ? "design point x" : "design point index";
  const double x_first = space.dim() == 1 ? space.points()(0, 0) : 0.0;
  const double x_last = space.dim() == 1 ? space.points()(space.points().rows() - 1, 0) : count - 1;
  os << "<text x=\"" << left << "\" y=\"" << top + plot_h + 16 << "\" font-family=\"sans-serif\" font-size=\"11\">"
     << x_first << "</text>\n";
  os << "<text x=\"" << left + plot_w << "\" y=\"" << top + plot_h + 16
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << x_last << "</text>\n";
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << axis_label << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace robust_design
