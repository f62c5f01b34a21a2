#include "mflq/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mflq/errors.hpp"
#include "mflq/riccati_feedback.hpp"
#include "mflq/riccati_openloop.hpp"
#include "mflq/strategy.hpp"

namespace mflq {

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError(tmp.string() + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw ValidationError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += ',';
    out += header[c];
  }
  out += '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw ValidationError(path + ": CSV row width does not match the header");
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  atomic_write(path, out);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) { return fnv1a64(text.data(), text.size()); }

std::string to_hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string model_hash(const ModelParams& params) {
  return to_hex64(fnv1a64(model_to_json(params)));
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

std::string fmt4g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return std::string(buf);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
                          "#e377c2", "#17becf", "#bcbd22", "#7f7f7f", "#aec7e8", "#ffbb78"};

}  // namespace

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series, bool log_x, bool log_y) {
  const double W = 800, H = 500;
  const double px = 70, py = 40, pw = 570, ph = 400;

  struct Pt {
    double x, y;
  };
  std::vector<std::vector<Pt>> pts(series.size());
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < n; ++i) {
      double x = s.x[i], y = s.y[i];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (log_x) {
        if (!(x > 0)) continue;
        x = std::log10(x);
      }
      if (log_y) {
        if (!(y > 0)) continue;
        y = std::log10(y);
      }
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
      pts[si].push_back({x, y});
    }
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double xpad = 0.04 * (xmax - xmin), ypad = 0.06 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  auto sx = [&](double x) { return px + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return py + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" "
         "height=\"500\" viewBox=\"0 0 800 500\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt2(W) + "\" height=\"" + fmt2(H) +
         "\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + fmt2(px + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" + xml_escape(title) + "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    const double gx = sx(xv), gy = sy(yv);
    svg += "<line x1=\"" + fmt2(gx) + "\" y1=\"" + fmt2(py) + "\" x2=\"" + fmt2(gx) +
           "\" y2=\"" + fmt2(py + ph) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt2(px) + "\" y1=\"" + fmt2(gy) + "\" x2=\"" + fmt2(px + pw) +
           "\" y2=\"" + fmt2(gy) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    const double xlab = log_x ? std::pow(10.0, xv) : xv;
    const double ylab = log_y ? std::pow(10.0, yv) : yv;
    svg += "<text x=\"" + fmt2(gx) + "\" y=\"" + fmt2(py + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           fmt4g(xlab) + "</text>\n";
    svg += "<text x=\"" + fmt2(px - 6) + "\" y=\"" + fmt2(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt4g(ylab) +
           "</text>\n";
  }
  svg += "<rect x=\"" + fmt2(px) + "\" y=\"" + fmt2(py) + "\" width=\"" + fmt2(pw) +
         "\" height=\"" + fmt2(ph) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
  svg += "<text x=\"" + fmt2(px + pw / 2) + "\" y=\"" + fmt2(H - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         xml_escape(x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt2(py + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 " + fmt2(py + ph / 2) + ")\">" + xml_escape(y_label) +
         "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const std::string color = series[si].color.empty()
                                  ? kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))]
                                  : series[si].color;
    if (pts[si].size() >= 2) {
      svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < pts[si].size(); ++i) {
        if (i) svg += ' ';
        svg += fmt2(sx(pts[si][i].x)) + "," + fmt2(sy(pts[si][i].y));
      }
      svg += "\"/>\n";
    }
    for (const auto& pt : pts[si]) {
      if (pts[si].size() <= 24) {
        svg += "<circle cx=\"" + fmt2(sx(pt.x)) + "\" cy=\"" + fmt2(sy(pt.y)) +
               "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
      }
    }
    const double ly = py + 14 + 18.0 * static_cast<double>(si);
    svg += "<line x1=\"" + fmt2(px + pw + 12) + "\" y1=\"" + fmt2(ly - 4) + "\" x2=\"" +
           fmt2(px + pw + 34) + "\" y2=\"" + fmt2(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt2(px + pw + 40) + "\" y=\"" + fmt2(ly) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(series[si].label) +
           "</text>\n";
  }
  svg += "</svg>\n";
  atomic_write(path, svg);
}

nlohmann::json sim_config_to_json(const SimConfig& cfg) {
  return nlohmann::json{{"N", cfg.N},
                        {"paths", cfg.paths},
                        {"sim_steps", cfg.sim_steps},
                        {"store_every", cfg.store_every},
                        {"seed", cfg.seed},
                        {"antithetic", cfg.antithetic},
                        {"realized_leader_in_follower_control",
                         cfg.realized_leader_in_follower_control},
                        {"store_followers", cfg.store_followers}};
}

namespace {

nlohmann::json num_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

nlohmann::json cost_report_to_json(const CostReport& report) {
  return nlohmann::json{{"mode", report.mode},
                        {"N", report.N},
                        {"paths", report.paths},
                        {"J0_mean", num_or_null(report.J0_mean)},
                        {"J0_se", num_or_null(report.J0_se)},
                        {"Jsoc_mean", num_or_null(report.Jsoc_mean)},
                        {"Jsoc_se", num_or_null(report.Jsoc_se)},
                        {"per_capita_social", num_or_null(report.per_capita_social)},
                        {"closed_form_leader", num_or_null(report.closed_form_leader)},
                        {"closed_form_social", num_or_null(report.closed_form_social)},
                        {"s_T", num_or_null(report.s_T)},
                        {"meanfield_gap", num_or_null(report.meanfield_gap)},
                        {"epsilon_hat", num_or_null(report.epsilon_hat)},
                        {"epsilon_se", num_or_null(report.epsilon_se)}};
}

nlohmann::json convergence_to_json(const ConvergenceStudy& study) {
  return nlohmann::json{{"Ns", study.Ns},
                        {"values", study.values},
                        {"slope", num_or_null(study.slope)},
                        {"intercept", num_or_null(study.intercept)},
                        {"status", study.status}};
}

nlohmann::json manifest_template(const ModelParams& params, const std::string& command) {
  nlohmann::json m;
  m["schema"] = "mflq-manifest-v1";
  m["tool"] = "mflq 0.1.0";
  m["command"] = command;
  m["model"] = nlohmann::json::parse(model_to_json(params));
  m["model_hash"] = model_hash(params);
  m["config"] = nlohmann::json::object();
  m["outputs"] = nlohmann::json::object();
  m["results"] = nlohmann::json::object();
  m["timings"] = nlohmann::json::object();
  return m;
}

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
  atomic_write(path, manifest.dump(2) + "\n");
}

nlohmann::json read_manifest(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

bool manifests_equal_ignoring_timings(const nlohmann::json& a, const nlohmann::json& b) {
  nlohmann::json ca = a, cb = b;
  ca.erase("timings");
  cb.erase("timings");
  return ca == cb;
}

namespace {

class BinWriter {
 public:
  void bytes(const void* data, std::size_t len) {
    buf_.append(static_cast<const char*>(data), len);
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void u8(std::uint8_t v) { bytes(&v, sizeof v); }
  void doubles(const double* data, std::size_t count) { bytes(data, count * sizeof(double)); }
  void vecd(const std::vector<double>& v) {
    u64(v.size());
    doubles(v.data(), v.size());
  }
  void vec_series(const std::vector<Vec>& series) {
    u64(series.size());
    u64(series.empty() ? 0 : static_cast<std::uint64_t>(series[0].size()));
    for (const Vec& v : series) doubles(v.data(), static_cast<std::size_t>(v.size()));
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class BinReader {
 public:
  BinReader(std::string data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}
  void bytes(void* out, std::size_t len) {
    if (pos_ + len > data_.size()) throw ParseError(origin_ + ": truncated ensemble file");
    std::memcpy(out, data_.data() + pos_, len);
    pos_ += len;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::vector<double> vecd() {
    const std::uint64_t n = checked_count(u64());
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  std::vector<Vec> vec_series() {
    const std::uint64_t count = checked_count(u64());
    const std::uint64_t dim = checked_count(u64());
    std::vector<Vec> series(count);
    for (auto& v : series) {
      v.resize(static_cast<Eigen::Index>(dim));
      bytes(v.data(), dim * sizeof(double));
    }
    return series;
  }
  bool done() const { return pos_ == data_.size(); }
  const std::string& origin() const { return origin_; }

  std::uint64_t checked_count(std::uint64_t n) const {
    if (n > data_.size()) throw ParseError(origin_ + ": corrupt ensemble file");
    return n;
  }

 private:
  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

constexpr char kBinMagic[8] = {'M', 'F', 'L', 'Q', 'B', 'I', 'N', '1'};

}  // namespace

void write_ensemble_binary(const std::string& path, const Ensemble& ens) {
  BinWriter w;
  w.bytes(kBinMagic, sizeof kBinMagic);
  w.u64(static_cast<std::uint64_t>(ens.cfg.N));
  w.u64(static_cast<std::uint64_t>(ens.cfg.paths));
  w.u64(static_cast<std::uint64_t>(ens.cfg.sim_steps));
  w.u64(static_cast<std::uint64_t>(ens.cfg.store_every));
  w.u64(ens.cfg.seed);
  w.u8(ens.cfg.antithetic ? 1 : 0);
  w.u8(ens.cfg.realized_leader_in_follower_control ? 1 : 0);
  w.u8(ens.cfg.store_followers ? 1 : 0);
  w.vecd(ens.times);
  w.vecd(ens.gap_sq);
  w.vecd(ens.J0_path);
  w.vecd(ens.Jsoc_path);
  w.vecd(ens.sT_integrand);
  w.vec_series(ens.mean_x0);
  w.vec_series(ens.mean_xN);
  w.vec_series(ens.mean_xbar);
  w.u64(ens.x0_stored.size());
  for (const auto& per_path : ens.x0_stored) w.vec_series(per_path);
  w.u64(ens.xbar_stored.size());
  for (const auto& per_path : ens.xbar_stored) w.vec_series(per_path);
  w.u64(ens.followers_stored.size());
  for (const auto& per_path : ens.followers_stored) {
    w.u64(per_path.size());
    w.u64(per_path.empty() ? 0 : static_cast<std::uint64_t>(per_path[0].rows()));
    w.u64(per_path.empty() ? 0 : static_cast<std::uint64_t>(per_path[0].cols()));
    for (const Mat& m : per_path) {
      w.doubles(m.data(), static_cast<std::size_t>(m.size()));
    }
  }
  atomic_write(path, w.str());
}

Ensemble read_ensemble_binary(const std::string& path) {
  BinReader r(read_file(path), path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kBinMagic, sizeof magic) != 0) {
    throw ParseError(path + ": not an ensemble file (bad magic)");
  }
  Ensemble ens;
  ens.cfg.N = static_cast<int>(r.u64());
  ens.cfg.paths = static_cast<int>(r.u64());
  ens.cfg.sim_steps = static_cast<int>(r.u64());
  ens.cfg.store_every = static_cast<int>(r.u64());
  ens.cfg.seed = r.u64();
  ens.cfg.antithetic = r.u8() != 0;
  ens.cfg.realized_leader_in_follower_control = r.u8() != 0;
  ens.cfg.store_followers = r.u8() != 0;
  ens.times = r.vecd();
  ens.gap_sq = r.vecd();
  ens.J0_path = r.vecd();
  ens.Jsoc_path = r.vecd();
  ens.sT_integrand = r.vecd();
  ens.mean_x0 = r.vec_series();
  ens.mean_xN = r.vec_series();
  ens.mean_xbar = r.vec_series();
  ens.x0_stored.resize(r.checked_count(r.u64()));
  for (auto& per_path : ens.x0_stored) per_path = r.vec_series();
  ens.xbar_stored.resize(r.checked_count(r.u64()));
  for (auto& per_path : ens.xbar_stored) per_path = r.vec_series();
  ens.followers_stored.resize(r.checked_count(r.u64()));
  for (auto& per_path : ens.followers_stored) {
    const std::uint64_t count = r.checked_count(r.u64());
    const std::uint64_t rows = r.checked_count(r.u64());
    const std::uint64_t cols = r.checked_count(r.u64());
    per_path.resize(count);
    for (Mat& m : per_path) {
      m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      r.bytes(m.data(), rows * cols * sizeof(double));
    }
  }
  if (!r.done()) throw ParseError(path + ": trailing bytes in ensemble file");
  return ens;
}

namespace {

void append_block_cols(std::vector<std::string>& header, const std::string& name, int rows,
                       int cols) {
  if (rows == 1 && cols == 1) {
    header.push_back(name);
    return;
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      header.push_back(name + "_" + std::to_string(r) + "_" + std::to_string(c));
    }
  }
}

void append_block_vals(std::vector<double>& row, const Mat& m) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
  }
}

void append_vec_cols(std::vector<std::string>& header, const std::string& name, int dim) {
  if (dim == 1) {
    header.push_back(name);
    return;
  }
  for (int i = 0; i < dim; ++i) header.push_back(name + "_" + std::to_string(i));
}

std::vector<SvgSeries> csv_to_series(const std::vector<std::string>& header,
                                     const std::vector<std::vector<double>>& rows,
                                     std::size_t max_series) {
  std::vector<SvgSeries> series;
  for (std::size_t c = 1; c < header.size() && series.size() < max_series; ++c) {
    SvgSeries s;
    s.label = header[c];
    for (const auto& row : rows) {
      s.x.push_back(row[0]);
      s.y.push_back(row[c]);
    }
    series.push_back(std::move(s));
  }
  return series;
}

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<std::string> write_paper_bundle(const ModelParams& params, const std::string& out_dir,
                                            const SimConfig& sim_cfg, int solver_steps,
                                            const std::string& command_echo) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto join = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

  nlohmann::json manifest = manifest_template(params, command_echo);
  manifest["config"] = {{"sim", sim_config_to_json(sim_cfg)}, {"solver_steps", solver_steps}};

  auto t0 = std::chrono::steady_clock::now();
  const OpenLoopFollowerSolution fol = solve_follower_system(params, solver_steps);
  const StackedLeaderSolution leader = solve_leader_stacked(params, fol, solver_steps);
  const OpenLoopPolicy ol_pol = build_openloop_policy(params, fol, leader);
  manifest["timings"]["solve_openloop_ms"] = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const FeedbackSolution fb = solve_feedback_joint(params, solver_steps);
  const FeedbackPolicy fb_pol = build_feedback_policy(params, fb);
  manifest["timings"]["solve_feedback_ms"] = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const Ensemble ol_ens = simulate_openloop(params, ol_pol, sim_cfg);
  manifest["timings"]["simulate_openloop_ms"] = ms_since(t0);
  t0 = std::chrono::steady_clock::now();
  const Ensemble fb_ens = simulate_feedback(params, fb_pol, sim_cfg);
  manifest["timings"]["simulate_feedback_ms"] = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const std::vector<int> gap_Ns{10, 20, 40, 80, 160};
  const ConvergenceStudy gap = riccati_gap_study(params, fb, gap_Ns, solver_steps);
  manifest["timings"]["convergence_ms"] = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const int n0 = params.dims.n0, n = params.dims.n;
  std::vector<std::string> files;

  {
    static const char* names[] = {"K", "Kbar", "P", "Pbar", "P0"};
    std::vector<std::string> header{"t"};
    for (int b = 0; b < OpenLoopFollowerSolution::block_count; ++b) {
      append_block_cols(header, names[b], static_cast<int>(fol.sol.block(0, b).rows()),
                        static_cast<int>(fol.sol.block(0, b).cols()));
    }
    append_block_cols(header, "Pcal", leader.s, leader.s);
    std::vector<std::vector<double>> rows;
    for (int k = 0; k <= fol.sol.steps(); ++k) {
      std::vector<double> row{fol.sol.time_at(k)};
      for (int b = 0; b < OpenLoopFollowerSolution::block_count; ++b) {
        append_block_vals(row, fol.sol.block(k, b));
      }
      append_block_vals(row, leader.Pcal.block(k, 0));
      rows.push_back(std::move(row));
    }
    const std::string csv = join("riccati_openloop.csv");
    write_csv(csv, header, rows);
    files.push_back(csv);
    const std::string svg = join("riccati_openloop.svg");
    write_svg_chart(svg, "Open-loop Riccati blocks", "t", "value",
                    csv_to_series(header, rows, 12));
    files.push_back(svg);
  }

  {
    static const char* names[] = {"M", "Mbar", "M0", "Lam0", "Lambar", "Th1", "Th2", "Th3"};
    std::vector<std::string> header{"t"};
    for (int b = 0; b < FeedbackSolution::block_count; ++b) {
      append_block_cols(header, names[b], static_cast<int>(fb.sol.block(0, b).rows()),
                        static_cast<int>(fb.sol.block(0, b).cols()));
    }
    std::vector<std::vector<double>> rows;
    for (int k = 0; k <= fb.sol.steps(); ++k) {
      std::vector<double> row{fb.sol.time_at(k)};
      for (int b = 0; b < FeedbackSolution::block_count; ++b) {
        append_block_vals(row, fb.sol.block(k, b));
      }
      rows.push_back(std::move(row));
    }
    const std::string csv = join("riccati_feedback.csv");
    write_csv(csv, header, rows);
    files.push_back(csv);
    const std::string svg = join("riccati_feedback.svg");
    write_svg_chart(svg, "Feedback Riccati blocks", "t", "value",
                    csv_to_series(header, rows, 12));
    files.push_back(svg);
  }

  {
    std::vector<std::string> header{"t"};
    append_vec_cols(header, "ol_x0", n0);
    append_vec_cols(header, "ol_xN", n);
    append_vec_cols(header, "ol_xbar", n);
    append_vec_cols(header, "fb_x0", n0);
    append_vec_cols(header, "fb_xN", n);
    append_vec_cols(header, "fb_xbar", n);
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < ol_ens.times.size(); ++k) {
      std::vector<double> row{ol_ens.times[k]};
      append_block_vals(row, ol_ens.mean_x0[k]);
      append_block_vals(row, ol_ens.mean_xN[k]);
      append_block_vals(row, ol_ens.mean_xbar[k]);
      append_block_vals(row, fb_ens.mean_x0[k]);
      append_block_vals(row, fb_ens.mean_xN[k]);
      append_block_vals(row, fb_ens.mean_xbar[k]);
      rows.push_back(std::move(row));
    }
    const std::string csv = join("trajectories.csv");
    write_csv(csv, header, rows);
    files.push_back(csv);
    const std::string svg = join("trajectories.svg");
    write_svg_chart(svg, "Mean trajectories", "t", "state",
                    csv_to_series(header, rows, 12));
    files.push_back(svg);
  }

  {
    std::vector<std::string> header{"N", "riccati_gap"};
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < gap.Ns.size(); ++i) {
      rows.push_back({static_cast<double>(gap.Ns[i]), gap.values[i]});
    }
    const std::string csv = join("convergence.csv");
    write_csv(csv, header, rows);
    files.push_back(csv);
    const std::string svg = join("convergence.svg");
    write_svg_chart(svg, "Finite-population Riccati gap", "N", "sup gap",
                    csv_to_series(header, rows, 12), true, true);
    files.push_back(svg);
  }

  const CostReport ol_report = cost_report_openloop(params, fol, leader, ol_ens);
  const CostReport fb_report = cost_report_feedback(params, fb, fb_ens);
  manifest["results"]["openloop"] = cost_report_to_json(ol_report);
  manifest["results"]["feedback"] = cost_report_to_json(fb_report);
  manifest["results"]["riccati_gap"] = convergence_to_json(gap);
  manifest["results"]["openloop_residual"] = leader.staggered_residual;
  manifest["results"]["initial_blocks"] = {
      {"P", mat_to_json(fol.P(0))},       {"Pbar", mat_to_json(fol.Pbar(0))},
      {"K", mat_to_json(fol.K(0))},       {"Pcal", mat_to_json(leader.Pcal.block(0, 0))},
      {"M", mat_to_json(fb.M(0))},        {"Mbar", mat_to_json(fb.Mbar(0))},
      {"Lam0", mat_to_json(fb.Lam0(0))},  {"Th1", mat_to_json(fb.Th1(0))},
      {"Th2", mat_to_json(fb.Th2(0))},    {"Th3", mat_to_json(fb.Th3(0))}};

  for (const std::string& f : files) {
    const std::string content = read_file(f);
    manifest["outputs"][fs::path(f).filename().string()] = {
        {"bytes", content.size()}, {"fnv1a64", to_hex64(fnv1a64(content))}};
  }
  manifest["timings"]["write_ms"] = ms_since(t0);

  const std::string mpath = join("manifest.json");
  write_manifest(mpath, manifest);
  files.push_back(mpath);
  return files;
}

}  // namespace mflq
