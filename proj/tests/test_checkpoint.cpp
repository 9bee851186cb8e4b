// Copyright 2026 The ebus-slowfast Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "ebus/checkpoint.hpp"
#include "ebus/error.hpp"
#include "ebus/rng.hpp"
#include "test_util.hpp"

namespace ebus {
namespace {

std::vector<NamedTensor> sample_tensors() {
  return {{"a", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, -6.5f})}, {"b.c", Tensor<float>({1}, {0.25f})}};
}

TEST(Checkpoint, EncodeLayout) {
  auto bytes = encode_checkpoint({{"w", Tensor<float>({1}, {1.0f})}});
  const std::vector<std::uint8_t> want{'E', 'B', 'D', 'S', 1, 0, 0, 0,  // magic, version
                                       1, 0, 0, 0, 0, 0, 0, 0,          // count
                                       1, 0, 0, 0, 'w',                 // name
                                       1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0,  // rank, dims
                                       0x00, 0x00, 0x80, 0x3f};             // 1.0f
  EXPECT_EQ(bytes, want);
}

TEST(Checkpoint, RoundtripBytes) {
  auto bytes = encode_checkpoint(sample_tensors());
  auto back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "a");
  EXPECT_EQ(back[0].value, sample_tensors()[0].value);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_TRUE(decode_checkpoint(encode_checkpoint({})).empty());
}

TEST(Checkpoint, CorruptInputsReportOffsets) {
  auto bytes = encode_checkpoint(sample_tensors());
  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_checkpoint(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + cut);
    EXPECT_THROW(decode_checkpoint(t), FormatError) << cut;
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  auto dup = encode_checkpoint({sample_tensors()[0], sample_tensors()[0]});
  EXPECT_THROW(decode_checkpoint(dup), FormatError);
}

TEST(Checkpoint, ModelRoundtripPreservesOutputs) {
  testing::TempDir dir("ckpt");
  auto cfg = SlowFastConfig::tiny();
  auto a = init_params(cfg, SwavConfig{}, 1);
  // Non-default running statistics must survive too.
  a->norm_stats("slow.stem.bn").mean.fill(0.3f);
  const auto path = dir.path() / "m.ebds";
  save_checkpoint(*a, path);

  auto b = init_params(cfg, SwavConfig{}, 2);
  assign_tensors(*b, load_checkpoint(path));
  EXPECT_EQ(encode_checkpoint(model_tensors(*b)), read_file_bytes(path));

  Rng rng(3);
  Tensor<float> slow({1, 1, 4, 64, 64}), fast({1, 1, 16, 64, 64});
  for (auto& v : slow.data()) v = static_cast<float>(rng.uniform());
  for (auto& v : fast.data()) v = static_cast<float>(rng.uniform());
  Tape<float> tape(false);
  auto oa = forward(tape, *a, tape.constant(slow), tape.constant(fast), NormMode::kEval);
  auto ob = forward(tape, *b, tape.constant(slow), tape.constant(fast), NormMode::kEval);
  EXPECT_EQ(oa.logit.value(), ob.logit.value());
  EXPECT_EQ(oa.embedding.value(), ob.embedding.value());
}

TEST(Checkpoint, AssignRejectsMismatch) {
  auto m = init_params(SlowFastConfig::tiny(), SwavConfig{}, 1);
  auto tensors = model_tensors(*m);
  tensors.pop_back();
  EXPECT_THROW(assign_tensors(*m, tensors), Error);
  tensors = model_tensors(*m);
  tensors[0].value = Tensor<float>({1});
  EXPECT_THROW(assign_tensors(*m, tensors), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/m.ebds"), Error);
}

}  // namespace
}  // namespace ebus
