/*
 * Copyright 2026 The advfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <cmath>

#include "advfeat/nn.hpp"
#include "doctest.h"
#include "generators.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace advfeat;
using namespace advfeat::testing;

namespace {

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  REQUIRE(a.shape() == b.shape());
  double d = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(double(a[i]) - double(b[i])));
  return d;
}

void run_gradcheck(const std::string& name, std::size_t cases) {
  for (const auto& check : gradient_checks()) {
    if (check.name != name) continue;
    for (std::uint64_t i = 0; i < cases; ++i) {
      Gen gen(100, i);
      const double err = check.instance(gen);
      INFO(std::string(name) << " case " << i);
      CHECK(err < check.tolerance);
    }
    return;
  }
  FAIL("no gradient check named " << name);
}

}  // namespace

TEST_CASE("conv2d: output size arithmetic") {
  CHECK(conv_output_size(64, 3, 1, 1) == 64);
  CHECK(conv_output_size(2, 2, 0, 1) == 1);
  CHECK(conv_output_size(5, 3, 0, 2) == 2);
  CHECK_THROWS_AS(conv_output_size(4, 3, 0, 2), ShapeError);
  CHECK_THROWS_AS(conv_output_size(1, 3, 0, 1), ShapeError);
}

TEST_CASE("conv2d: forward matches the naive loop (float and double)") {
  for (std::uint64_t i = 0; i < 40; ++i) {
    Gen gen(1, i);
    const std::size_t k = gen.coin() ? 3 : 2, pad = k == 3 ? 1 : 0;
    const std::size_t cin = gen.size(1, 5), cout = gen.size(1, 6), h = gen.size(k, 9), w = gen.size(k, 9);
    ConvLayer<double> ld{gen.normal_tensor<double>(Shape{cout, cin, k, k}), gen.normal_tensor<double>(Shape{cout}),
                         pad, 1};
    const auto x = gen.normal_tensor<double>(Shape{gen.size(1, 3), cin, h, w});
    const auto ref = naive_conv2d(x, ld.kernels, ld.bias, pad, 1);
    CHECK(max_abs_diff(conv2d_forward(x, ld), ref) < 1e-12);

    ConvLayer<float> lf{ld.kernels.cast<float>(), ld.bias.cast<float>(), pad, 1};
    const auto yf = conv2d_forward(x.cast<float>(), lf);
    CHECK(max_abs_diff(yf.cast<double>(), ref) < 1e-4);
  }
}

TEST_CASE("conv2d: large shapes exercise row tiling") {
  Gen gen(2, 0);
  ConvLayer<float> l{gen.normal_tensor<float>(Shape{8, 16, 3, 3}, 0.1), gen.normal_tensor<float>(Shape{8}), 1, 1};
  const auto x = gen.normal_tensor<float>(Shape{2, 16, 70, 66});
  const auto ref = naive_conv2d(x, l.kernels, l.bias, 1, 1);
  CHECK(max_abs_diff(conv2d_forward(x, l), ref) < 1e-4);
  const auto gy = gen.normal_tensor<float>(ref.shape());
  const auto g = conv2d_backward(gy, x, l);
  const auto g2 = conv2d_backward(gy, x, l, false);
  CHECK(g.kernels == g2.kernels);
  CHECK(g.bias == g2.bias);
  CHECK(g2.input.shape() == Shape{1});
  CHECK(g.input.shape() == x.shape());
}

TEST_CASE("conv2d: mismatched channels throw") {
  auto l = ConvLayer<float>::make(3, 4, 3, 1);
  CHECK_THROWS_AS(conv2d_forward(Tensor(Shape{1, 2, 5, 5}), l), ShapeError);
  CHECK_THROWS_AS(conv2d_forward(Tensor(Shape{2, 5, 5}), l), ShapeError);
}

TEST_CASE("maxpool: matches naive and breaks ties toward the first element") {
  for (std::uint64_t i = 0; i < 30; ++i) {
    Gen gen(3, i);
    const auto x = gen.normal_tensor<float>(Shape{gen.size(1, 3), gen.size(1, 3), 2 * gen.size(1, 4), 2 * gen.size(1, 4)});
    CHECK(maxpool2x2(x).output == naive_maxpool(x));
  }
  const Tensor flat = Tensor::full(Shape{1, 1, 2, 2}, 1.0f);
  const auto r = maxpool2x2(flat);
  CHECK(r.indices.argmax[0] == 0);
  const auto back = maxpool2x2_backward(Tensor::full(Shape{1, 1, 1, 1}, 1.0f), r.indices);
  CHECK(back[0] == 1.0f);
  CHECK(back[1] == 0.0f);
  CHECK_THROWS_AS(maxpool2x2(Tensor(Shape{1, 1, 3, 2})), ShapeError);
}

TEST_CASE("leaky relu: slope 0.2 and derivative 1 at zero") {
  const Tensor x(Shape{4}, {-1.0f, 0.0f, 2.0f, -0.5f});
  const auto y = leaky_relu(x);
  CHECK(y[0] == doctest::Approx(-0.2f));
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);
  const auto g = leaky_relu_backward(Tensor::full(Shape{4}, 1.0f), x);
  CHECK(g[0] == doctest::Approx(0.2f));
  CHECK(g[1] == 1.0f);
  CHECK(g[2] == 1.0f);
}

TEST_CASE("batchnorm: train forward matches naive; running statistics use unbiased variance") {
  for (std::uint64_t i = 0; i < 20; ++i) {
    Gen gen(4, i);
    const std::size_t c = gen.size(1, 4);
    auto layer = BatchNormLayer<double>::make(c);
    layer.gamma = gen.normal_tensor<double>(Shape{c});
    layer.beta = gen.normal_tensor<double>(Shape{c});
    const auto x = gen.normal_tensor<double>(Shape{gen.size(2, 4), c, gen.size(1, 4), gen.size(1, 4)}, 2.0);
    const auto y = batchnorm_forward(x, layer, Mode::train);
    CHECK(max_abs_diff(y, naive_batchnorm(x, layer.gamma, layer.beta, layer.epsilon)) < 1e-10);

    const double n = double(x.numel() / c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean = 0, ss = 0;
      for (std::size_t k = 0; k < x.numel(); ++k)
        if ((k / (x.dim(2) * x.dim(3))) % c == ch) mean += x[k];
      mean /= n;
      for (std::size_t k = 0; k < x.numel(); ++k)
        if ((k / (x.dim(2) * x.dim(3))) % c == ch) ss += (x[k] - mean) * (x[k] - mean);
      CHECK(layer.running_mean[ch] == doctest::Approx(0.1 * mean).epsilon(1e-9));
      CHECK(layer.running_var[ch] == doctest::Approx(0.9 + 0.1 * ss / (n - 1)).epsilon(1e-9));
    }
  }
}

TEST_CASE("batchnorm: eval mode uses running statistics and leaves them unchanged") {
  Gen gen(5, 0);
  auto layer = BatchNormLayer<float>::make(2);
  layer.running_mean = Tensor(Shape{2}, {1.0f, -1.0f});
  layer.running_var = Tensor(Shape{2}, {4.0f, 0.25f});
  const auto x = gen.normal_tensor<float>(Shape{3, 2, 2, 2});
  const auto before = layer;
  const auto y = batchnorm_forward(x, layer, Mode::eval);
  CHECK(layer.running_mean == before.running_mean);
  CHECK(layer.running_var == before.running_var);
  CHECK(y == batchnorm_eval(x, layer));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx((x.at(0, 0, 0, 0) - 1.0f) / std::sqrt(4.0f + 1e-5f)));
}

TEST_CASE("gradient checks: every layer backward against central differences") {
  for (const auto* name : {"conv2d", "maxpool2x2", "leaky_relu", "batchnorm_train"}) run_gradcheck(name, 20);
}
