#include "mflq/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mflq/errors.hpp"

namespace mflq {

using json = nlohmann::json;

namespace {

void check_shape(std::vector<std::string>& out, const Mat& m, int rows, int cols,
                 const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream ss;
    ss << name << ": expected " << rows << "x" << cols << ", got " << m.rows() << "x" << m.cols();
    out.push_back(ss.str());
  }
}

void check_symmetric(std::vector<std::string>& out, const Mat& m, const char* name,
                     double tol = 1e-12) {
  if (m.rows() != m.cols()) return;  // shape violation already reported
  if (inf_norm(m - m.transpose()) > tol) {
    out.push_back(std::string(name) + ": not symmetric to 1e-12");
  }
}

void check_psd(std::vector<std::string>& out, const Mat& m, const char* name) {
  if (m.rows() != m.cols()) return;
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-12) {
    out.push_back(std::string(name) + ": not positive semidefinite");
  }
}

Mat parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ParseError(where + ": matrix must be a nested array of rows");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ParseError(where + ": ragged matrix rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ParseError(where + ": non-numeric entry");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Vec parse_vector(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ParseError(where + ": vector must be a flat array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(where + ": non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

const json& need(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing key '" + key + "'");
  return *it;
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Mat scalar(double x) { return Mat::Constant(1, 1, x); }

}  // namespace

std::vector<std::string> validate(const ModelParams& p) {
  std::vector<std::string> out;
  const int n0 = p.dims.n0, n = p.dims.n, m0 = p.dims.m0, m = p.dims.m;
  if (n0 < 1 || n < 1 || m0 < 1 || m < 1) {
    out.push_back("dims: n0, n, m0, m must all be strictly positive");
    return out;  // shapes below would be meaningless
  }

  check_shape(out, p.leader_dyn.A0, n0, n0, "A0");
  check_shape(out, p.leader_dyn.C0, n0, n0, "C0");
  check_shape(out, p.leader_dyn.B0, n0, m0, "B0");
  check_shape(out, p.leader_dyn.D0, n0, m0, "D0");
  check_shape(out, p.leader_dyn.G0, n0, n, "G0");
  check_shape(out, p.leader_dyn.Gbar0, n0, n, "Gbar0");

  check_shape(out, p.follower_dyn.A, n, n, "A");
  check_shape(out, p.follower_dyn.C, n, n, "C");
  check_shape(out, p.follower_dyn.G, n, n, "G");
  check_shape(out, p.follower_dyn.Gbar, n, n, "Gbar");
  check_shape(out, p.follower_dyn.B, n, m, "B");
  check_shape(out, p.follower_dyn.D, n, m, "D");
  check_shape(out, p.follower_dyn.F, n, n0, "F");
  check_shape(out, p.follower_dyn.Fbar, n, n0, "Fbar");

  check_shape(out, p.leader_cost.Q0, n0, n0, "Q0");
  check_shape(out, p.leader_cost.H0, n0, n0, "H0");
  check_shape(out, p.leader_cost.R0, m0, m0, "R0");
  check_shape(out, p.leader_cost.Gamma0, n0, n, "Gamma0");
  check_shape(out, p.leader_cost.Ghat0, n0, n, "Ghat0");
  check_symmetric(out, p.leader_cost.Q0, "Q0");
  check_symmetric(out, p.leader_cost.H0, "H0");
  check_symmetric(out, p.leader_cost.R0, "R0");

  check_shape(out, p.follower_cost.Q, n, n, "Q");
  check_shape(out, p.follower_cost.H, n, n, "H");
  check_shape(out, p.follower_cost.R, m, m, "R");
  check_shape(out, p.follower_cost.Gamma, n, n, "Gamma");
  check_shape(out, p.follower_cost.Ghat, n, n, "Ghat");
  check_shape(out, p.follower_cost.Gamma1, n, n0, "Gamma1");
  check_shape(out, p.follower_cost.Ghat1, n, n0, "Ghat1");
  check_symmetric(out, p.follower_cost.Q, "Q");
  check_symmetric(out, p.follower_cost.H, "H");
  check_symmetric(out, p.follower_cost.R, "R");

  if (p.init.leader_mean.size() != n0) out.push_back("init.leader_mean: wrong length");
  if (p.init.follower_mean.size() != n) out.push_back("init.follower_mean: wrong length");
  check_shape(out, p.init.leader_cov, n0, n0, "init.leader_cov");
  check_shape(out, p.init.follower_cov, n, n, "init.follower_cov");
  check_symmetric(out, p.init.leader_cov, "init.leader_cov");
  check_symmetric(out, p.init.follower_cov, "init.follower_cov");
  check_psd(out, p.init.leader_cov, "init.leader_cov");
  check_psd(out, p.init.follower_cov, "init.follower_cov");

  if (!(p.T > 0.0)) out.push_back("horizon: T must be positive");
  if (p.grid_steps < 2) out.push_back("horizon: grid_steps must be >= 2");
  return out;
}

WeightAggregates weight_aggregates(const FollowerCost& c, double symmetry_tol) {
  const int n = static_cast<int>(c.Q.rows());
  const Mat I = Mat::Identity(n, n);
  WeightAggregates w;
  w.Q_Gamma = c.Q * c.Gamma + c.Gamma.transpose() * c.Q -
              c.Gamma.transpose() * c.Q * c.Gamma;
  w.H_Ghat = c.H * c.Ghat + c.Ghat.transpose() * c.H -
             c.Ghat.transpose() * c.H * c.Ghat;
  w.Q_Gamma1 = (I - c.Gamma).transpose() * c.Q * c.Gamma1;
  w.H_Ghat1 = (I - c.Ghat).transpose() * c.H * c.Ghat1;
  // Symmetry is automatic for symmetric Q, H; enforce it exactly so the
  // downstream Riccati blocks inherit clean symmetry.
  if (inf_norm(w.Q_Gamma - w.Q_Gamma.transpose()) > symmetry_tol ||
      inf_norm(w.H_Ghat - w.H_Ghat.transpose()) > symmetry_tol) {
    throw ValidationError("weight_aggregates: aggregated weight not symmetric (asymmetric Q or H?)");
  }
  w.Q_Gamma = 0.5 * (w.Q_Gamma + w.Q_Gamma.transpose()).eval();
  w.H_Ghat = 0.5 * (w.H_Ghat + w.H_Ghat.transpose()).eval();
  return w;
}

ModelParams table1_model() {
  ModelParams p;
  p.dims = {1, 1, 1, 1};

  p.leader_dyn.A0 = scalar(-10.0);
  p.leader_dyn.B0 = scalar(1.0);
  p.leader_dyn.C0 = scalar(-0.5);
  p.leader_dyn.D0 = scalar(0.5);
  p.leader_dyn.G0 = scalar(0.0);
  p.leader_dyn.Gbar0 = scalar(0.0);

  p.follower_dyn.A = scalar(-2.0);
  p.follower_dyn.B = scalar(1.0);
  p.follower_dyn.G = scalar(1.0);
  p.follower_dyn.F = scalar(1.0);
  p.follower_dyn.C = scalar(-0.2);
  p.follower_dyn.D = scalar(0.2);
  p.follower_dyn.Gbar = scalar(0.2);
  p.follower_dyn.Fbar = scalar(0.2);

  p.leader_cost.Q0 = scalar(1.0);
  p.leader_cost.R0 = scalar(1.0);
  p.leader_cost.H0 = scalar(2.0);
  p.leader_cost.Gamma0 = scalar(1.0);
  p.leader_cost.Ghat0 = scalar(1.0);

  p.follower_cost.Q = scalar(1.0);
  p.follower_cost.R = scalar(1.0);
  p.follower_cost.H = scalar(2.0);
  p.follower_cost.Gamma = scalar(1.0);
  p.follower_cost.Gamma1 = scalar(1.0);
  p.follower_cost.Ghat = scalar(1.0);
  p.follower_cost.Ghat1 = scalar(1.0);

  p.init.leader_mean = Vec::Constant(1, 10.0);
  p.init.leader_cov = scalar(2.0);
  p.init.follower_mean = Vec::Constant(1, 5.0);
  p.init.follower_cov = scalar(1.0);

  p.T = 1.0;
  p.grid_steps = 2000;
  return p;
}

ModelParams parse_model(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }

  ModelParams p;
  const json& dims = need(j, "dims", origin);
  p.dims.n0 = need(dims, "n0", origin + ".dims").get<int>();
  p.dims.n = need(dims, "n", origin + ".dims").get<int>();
  p.dims.m0 = need(dims, "m0", origin + ".dims").get<int>();
  p.dims.m = need(dims, "m", origin + ".dims").get<int>();

  auto mat = [&origin](const json& sec, const char* key, const std::string& where) {
    return parse_matrix(need(sec, key, origin + "." + where), origin + "." + where + "." + key);
  };

  const json& ld = need(j, "leader_dyn", origin);
  p.leader_dyn.A0 = mat(ld, "A0", "leader_dyn");
  p.leader_dyn.C0 = mat(ld, "C0", "leader_dyn");
  p.leader_dyn.B0 = mat(ld, "B0", "leader_dyn");
  p.leader_dyn.D0 = mat(ld, "D0", "leader_dyn");
  p.leader_dyn.G0 = mat(ld, "G0", "leader_dyn");
  p.leader_dyn.Gbar0 = mat(ld, "Gbar0", "leader_dyn");

  const json& fd = need(j, "follower_dyn", origin);
  p.follower_dyn.A = mat(fd, "A", "follower_dyn");
  p.follower_dyn.C = mat(fd, "C", "follower_dyn");
  p.follower_dyn.G = mat(fd, "G", "follower_dyn");
  p.follower_dyn.Gbar = mat(fd, "Gbar", "follower_dyn");
  p.follower_dyn.B = mat(fd, "B", "follower_dyn");
  p.follower_dyn.D = mat(fd, "D", "follower_dyn");
  p.follower_dyn.F = mat(fd, "F", "follower_dyn");
  p.follower_dyn.Fbar = mat(fd, "Fbar", "follower_dyn");

  const json& lc = need(j, "leader_cost", origin);
  p.leader_cost.Q0 = mat(lc, "Q0", "leader_cost");
  p.leader_cost.H0 = mat(lc, "H0", "leader_cost");
  p.leader_cost.R0 = mat(lc, "R0", "leader_cost");
  p.leader_cost.Gamma0 = mat(lc, "Gamma0", "leader_cost");
  p.leader_cost.Ghat0 = mat(lc, "Ghat0", "leader_cost");

  const json& fc = need(j, "follower_cost", origin);
  p.follower_cost.Q = mat(fc, "Q", "follower_cost");
  p.follower_cost.H = mat(fc, "H", "follower_cost");
  p.follower_cost.R = mat(fc, "R", "follower_cost");
  p.follower_cost.Gamma = mat(fc, "Gamma", "follower_cost");
  p.follower_cost.Ghat = mat(fc, "Ghat", "follower_cost");
  p.follower_cost.Gamma1 = mat(fc, "Gamma1", "follower_cost");
  p.follower_cost.Ghat1 = mat(fc, "Ghat1", "follower_cost");

  const json& init = need(j, "init", origin);
  p.init.leader_mean = parse_vector(need(init, "leader_mean", origin + ".init"),
                                    origin + ".init.leader_mean");
  p.init.leader_cov = parse_matrix(need(init, "leader_cov", origin + ".init"),
                                   origin + ".init.leader_cov");
  p.init.follower_mean = parse_vector(need(init, "follower_mean", origin + ".init"),
                                      origin + ".init.follower_mean");
  p.init.follower_cov = parse_matrix(need(init, "follower_cov", origin + ".init"),
                                     origin + ".init.follower_cov");

  const json& hz = need(j, "horizon", origin);
  p.T = need(hz, "T", origin + ".horizon").get<double>();
  if (hz.contains("grid_steps")) p.grid_steps = hz["grid_steps"].get<int>();
  return p;
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open model file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), path);
}

std::string model_to_json(const ModelParams& p) {
  json j;
  j["dims"] = {{"n0", p.dims.n0}, {"n", p.dims.n}, {"m0", p.dims.m0}, {"m", p.dims.m}};
  j["leader_dyn"] = {{"A0", mat_json(p.leader_dyn.A0)},   {"C0", mat_json(p.leader_dyn.C0)},
                     {"B0", mat_json(p.leader_dyn.B0)},   {"D0", mat_json(p.leader_dyn.D0)},
                     {"G0", mat_json(p.leader_dyn.G0)},   {"Gbar0", mat_json(p.leader_dyn.Gbar0)}};
  j["follower_dyn"] = {{"A", mat_json(p.follower_dyn.A)},       {"C", mat_json(p.follower_dyn.C)},
                       {"G", mat_json(p.follower_dyn.G)},       {"Gbar", mat_json(p.follower_dyn.Gbar)},
                       {"B", mat_json(p.follower_dyn.B)},       {"D", mat_json(p.follower_dyn.D)},
                       {"F", mat_json(p.follower_dyn.F)},       {"Fbar", mat_json(p.follower_dyn.Fbar)}};
  j["leader_cost"] = {{"Q0", mat_json(p.leader_cost.Q0)},
                      {"H0", mat_json(p.leader_cost.H0)},
                      {"R0", mat_json(p.leader_cost.R0)},
                      {"Gamma0", mat_json(p.leader_cost.Gamma0)},
                      {"Ghat0", mat_json(p.leader_cost.Ghat0)}};
  j["follower_cost"] = {{"Q", mat_json(p.follower_cost.Q)},
                        {"H", mat_json(p.follower_cost.H)},
                        {"R", mat_json(p.follower_cost.R)},
                        {"Gamma", mat_json(p.follower_cost.Gamma)},
                        {"Ghat", mat_json(p.follower_cost.Ghat)},
                        {"Gamma1", mat_json(p.follower_cost.Gamma1)},
                        {"Ghat1", mat_json(p.follower_cost.Ghat1)}};
  j["init"] = {{"leader_mean", vec_json(p.init.leader_mean)},
               {"leader_cov", mat_json(p.init.leader_cov)},
               {"follower_mean", vec_json(p.init.follower_mean)},
               {"follower_cov", mat_json(p.init.follower_cov)}};
  j["horizon"] = {{"T", p.T}, {"grid_steps", p.grid_steps}};
  return j.dump(2) + "\n";
}

}  // namespace mflq
