#pragma once

#include <string>
#include <vector>

#include "mflq/types.hpp"

namespace mflq {

struct Dimensions {
  int n0 = 1;  // leader state
  int n = 1;   // follower state
  int m0 = 1;  // leader control
  int m = 1;   // follower control
};

struct LeaderDynamics {
  Mat A0, C0;        // n0 x n0
  Mat B0, D0;        // n0 x m0
  Mat G0, Gbar0;     // n0 x n
};

struct FollowerDynamics {
  Mat A, C, G, Gbar;  // n x n
  Mat B, D;           // n x m
  Mat F, Fbar;        // n x n0
};

struct LeaderCost {
  Mat Q0, H0;         // n0 x n0, symmetric
  Mat R0;             // m0 x m0, symmetric
  Mat Gamma0, Ghat0;  // n0 x n
};

struct FollowerCost {
  Mat Q, H;            // n x n, symmetric
  Mat R;               // m x m, symmetric
  Mat Gamma, Ghat;     // n x n
  Mat Gamma1, Ghat1;   // n x n0
};

// Aggregated weights:
//   Q_Gamma  = Q*Gamma + Gamma^T*Q - Gamma^T*Q*Gamma
//   H_Ghat   = H*Ghat + Ghat^T*H - Ghat^T*H*Ghat
//   Q_Gamma1 = (I - Gamma)^T * Q * Gamma1
//   H_Ghat1  = (I - Ghat)^T * H * Ghat1
struct WeightAggregates {
  Mat Q_Gamma, H_Ghat;      // n x n, symmetric
  Mat Q_Gamma1, H_Ghat1;    // n x n0
};

// Gaussian initial laws; every follower shares the same one.
struct InitialLaw {
  Vec leader_mean;    // n0
  Mat leader_cov;     // n0 x n0 PSD
  Vec follower_mean;  // n
  Mat follower_cov;   // n x n PSD
};

struct ModelParams {
  Dimensions dims;
  LeaderDynamics leader_dyn;
  FollowerDynamics follower_dyn;
  LeaderCost leader_cost;
  FollowerCost follower_cost;
  InitialLaw init;
  double T = 1.0;
  int grid_steps = 2000;
};

// Every dimension mismatch, asymmetric weight, or non-PSD covariance,
// one human-readable line each; empty means valid.
std::vector<std::string> validate(const ModelParams& params);

WeightAggregates weight_aggregates(const FollowerCost& cost, double symmetry_tol = 1e-12);

// The bundled scalar benchmark model (1 leader + follower population,
// all dimensions 1, leader law Normal(10,2), follower law Normal(5,1)).
ModelParams table1_model();

// JSON model files: sections dims, leader_dyn, follower_dyn, leader_cost,
// follower_cost, init, horizon; matrices as row-major nested arrays.
ModelParams load_model(const std::string& path);
ModelParams parse_model(const std::string& json_text, const std::string& origin = "<string>");
std::string model_to_json(const ModelParams& params);

}  // namespace mflq
