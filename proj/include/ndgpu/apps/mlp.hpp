#pragma once

// Small MLP classifier trained by hand-written backprop on Gaussian blobs:
// affine -> relu -> ... -> affine -> softmax cross-entropy.

#include <cstdint>
#include <vector>

#include "ndgpu/apps/report.hpp"
#include "ndgpu/device.hpp"
#include "ndgpu/kernel.hpp"

namespace ndgpu::apps {

struct MLPConfig {
    int input_dim = 8;
    std::vector<int> hidden{32};  // one entry per hidden layer
    int classes = 4;
    int batch = 64;
    int steps = 100;
    double lr = 0.1;
    std::uint64_t seed = 42;
    int dataset = 1024;  // training rows; steps cycle over dataset / batch minibatches
};

void validate(const MLPConfig& cfg);

struct Dataset {
    HostArray x;       // [n, dim] float32
    HostArray onehot;  // [n, classes] float32
    std::vector<int> labels;
};

// Rows are shuffled; class of row i is uniform over classes.
Dataset make_blobs(int rows, int dim, int classes, std::uint64_t seed);
Dataset slice_rows(const Dataset& d, int begin, int end);

struct MLPParams {
    std::vector<HostArray> weights;  // [in, out]
    std::vector<HostArray> biases;   // [out]
};

MLPParams init_params(const MLPConfig& cfg);

// relu backward as an elementwise kernel: gx = y > 0 ? gy : 0.
const ElementwiseKernel& relu_bwd_kernel();

struct TrainResult {
    std::vector<double> losses;  // one per step, before that step's update
    std::vector<double> step_ms;
    MLPParams params;
};

// ctx == nullptr trains on the host reference path. Throws Error(NonFiniteLoss).
TrainResult train(DeviceContext* ctx, const MLPConfig& cfg, const Dataset& data);

double loss_host(const MLPParams& params, const Dataset& batch);
double accuracy_host(const MLPParams& params, const Dataset& data);

struct GradCheck {
    double max_rel_err = 0.0;
    std::vector<double> per_tensor;  // weights then biases, layer order
    std::size_t checked = 0;
    std::size_t kinked = 0;  // entries whose +-eps step flips a relu; excluded from the error
};

// Central finite differences of the host float32 loss against the backprop gradient.
// A difference taken across a relu kink does not estimate the derivative, so such entries are skipped.
GradCheck grad_check(const MLPConfig& cfg, const Dataset& batch, double eps = 1e-2);

// Trains then evaluates on held-out rows from the same distribution; returns accuracy.
double train_and_evaluate(DeviceContext* ctx, const MLPConfig& cfg, int eval_rows);

// Timed training run plus the gradient check; samples are per-step times after the first step.
BenchReport run_mlp_train(DeviceContext* ctx, const MLPConfig& cfg);

}  // namespace ndgpu::apps
