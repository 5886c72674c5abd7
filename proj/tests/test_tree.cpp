// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "medusa/errors.hpp"
#include "medusa/rng.hpp"
#include "medusa/selfcheck.hpp"
#include "medusa/tree.hpp"
#include "medusa/tree_io.hpp"
#include "test_support.hpp"

namespace medusa {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;

std::vector<std::vector<int>> mask_sets(const StaticTreeBuffers& b) {
  std::vector<std::vector<int>> rows(b.num_nodes());
  for (int i = 0; i < b.num_nodes(); ++i) {
    for (int j = 0; j < b.num_nodes(); ++j) {
      if (b.visible(i, j)) rows[i].push_back(j);
    }
  }
  return rows;
}

TreeSpec four_node() { return {{2, 1}, {{0}, {1}, {0, 0}}}; }

TEST(CompileTree, FourNodeExample) {
  const auto b = compile_tree(four_node());
  ASSERT_EQ(b.num_nodes(), 4);
  EXPECT_EQ(mask_sets(b), (std::vector<std::vector<int>>{{0}, {0, 1}, {0, 2}, {0, 1, 3}}));
  EXPECT_THAT(testing::vec(b.tree_indices()), ElementsAre(0, 1, 2, 3));
  ASSERT_EQ(b.n_paths(), 2);
  EXPECT_THAT(testing::vec(b.retrieve_row(0)), ElementsAre(0, 2, -1));
  EXPECT_THAT(testing::vec(b.retrieve_row(1)), ElementsAre(0, 1, 3));
  EXPECT_THAT(testing::vec(b.path_lengths()), ElementsAre(2, 3));
  EXPECT_THAT(testing::vec(b.node_depth()), ElementsAre(0, 1, 1, 2));
  EXPECT_THAT(testing::vec(b.node_parent()), ElementsAre(-1, 0, 0, 1));
  EXPECT_EQ(b.candidate_len(), 4);
}

TEST(CompileTree, PathOrderDoesNotMatter) {
  const TreeSpec shuffled{{2, 1}, {{0, 0}, {1}, {0}}};
  EXPECT_EQ(compile_tree(shuffled), compile_tree(four_node()));
}

TEST(CompileTree, SingleChain) {
  const auto b = compile_tree({{1}, {{0}}});
  EXPECT_EQ(mask_sets(b), (std::vector<std::vector<int>>{{0}, {0, 1}}));
  ASSERT_EQ(b.n_paths(), 1);
  EXPECT_THAT(testing::vec(b.retrieve_row(0)), ElementsAre(0, 1));
}

TEST(CompileTree, FullChainIsLowerTriangular) {
  for (int K = 1; K <= 6; ++K) {
    TreeSpec spec{std::vector<int>(K, 1), {}};
    for (int d = 1; d <= K; ++d) spec.paths.push_back(std::vector<int>(d, 0));
    const auto b = compile_tree(spec);
    ASSERT_EQ(b.num_nodes(), K + 1);
    for (int i = 0; i <= K; ++i) {
      EXPECT_EQ(b.node_depth()[i], i);
      for (int j = 0; j <= K; ++j) EXPECT_EQ(b.visible(i, j), j <= i) << i << "," << j;
    }
  }
}

TEST(CompileTree, TreeIndicesFollowCandidateLayout) {
  const auto spec = TreeSpec::full({3, 2, 2});
  const auto b = compile_tree(spec);
  EXPECT_EQ(b.num_nodes(), 1 + 3 + 6 + 12);
  EXPECT_EQ(b.tree_indices()[0], 0);
  // Recover each node's rank tuple from the retrieval rows and check the offset rule.
  for (int r = 0; r < b.n_paths(); ++r) {
    const auto row = b.retrieve_row(r);
    for (int d = 1; d < b.path_lengths()[r]; ++d) {
      const int node = row[d];
      const int offset = 1 + (d > 1 ? 3 : 0) + (d > 2 ? 2 : 0);
      const int rank = b.tree_indices()[node] - offset;
      EXPECT_GE(rank, 0);
      EXPECT_LT(rank, spec.topk_per_head[d - 1]);
    }
  }
}

TEST(CompileTree, RejectsMissingPrefix) {
  try {
    compile_tree({{2, 2}, {{0}, {1, 1}}});
    FAIL() << "expected rejection";
  } catch (const InvalidArgument& e) {
    EXPECT_THAT(e.what(), HasSubstr("missing its prefix (1)"));
  }
}

TEST(CompileTree, RejectsRankOutOfBounds) {
  try {
    compile_tree({{2, 1}, {{0}, {0, 1}}});
    FAIL() << "expected rejection";
  } catch (const InvalidArgument& e) {
    EXPECT_THAT(e.what(), HasSubstr("(0,1)"));
    EXPECT_THAT(e.what(), HasSubstr("head 2"));
  }
}

TEST(CompileTree, RejectsMalformedSpecs) {
  EXPECT_THROW(compile_tree({{}, {}}), InvalidArgument);
  EXPECT_THROW(compile_tree({{0}, {}}), InvalidArgument);
  EXPECT_THROW(compile_tree({{2}, {{0}, {0}}}), InvalidArgument);
  EXPECT_THROW(compile_tree({{2}, {{}}}), InvalidArgument);
  EXPECT_THROW(compile_tree({{2}, {{0}, {0, 0}}}), InvalidArgument);
  EXPECT_THROW(compile_tree({{2}, {{-1}}}), InvalidArgument);
}

TEST(CompileTree, RootOnlyTree) {
  const auto b = compile_tree({{2}, {}});
  EXPECT_EQ(b.num_nodes(), 1);
  ASSERT_EQ(b.n_paths(), 1);
  EXPECT_THAT(testing::vec(b.retrieve_row(0)), ElementsAre(0, -1));
  EXPECT_EQ(b.max_depth(), 0);
}

TEST(DefaultTree, OneHead) {
  const auto t = default_tree(1);
  EXPECT_THAT(t.topk_per_head, ElementsAre(4));
  EXPECT_EQ(t.paths, (std::vector<std::vector<int>>{{0}, {1}, {2}, {3}}));
}

TEST(DefaultTree, TwoHeads) {
  const auto t = default_tree(2);
  EXPECT_THAT(t.topk_per_head, ElementsAre(4, 3));
  std::set<std::vector<int>> got(t.paths.begin(), t.paths.end());
  const std::set<std::vector<int>> want{{0}, {1}, {2}, {3}, {0, 0}, {0, 1}, {0, 2}, {1, 0}};
  EXPECT_EQ(got, want);
}

TEST(DefaultTree, SizesStayBounded) {
  EXPECT_LE(compile_tree(default_tree(3)).num_nodes(), 16);
  for (int K = 1; K <= 8; ++K) {
    const auto spec = default_tree(K);
    EXPECT_NO_THROW(spec.validate());
    EXPECT_LE(spec.num_nodes(), 32);
    EXPECT_EQ(spec.num_heads(), K);
    EXPECT_TRUE(validate_buffers(compile_tree(spec), spec).ok());
  }
  EXPECT_THROW(default_tree(0), InvalidArgument);
  EXPECT_THROW(default_tree(9), InvalidArgument);
}

TEST(ValidateBuffers, FlippedMaskBitIsLocated) {
  const auto spec = four_node();
  auto raw = compile_tree(spec).raw();
  raw.attn_mask[2 * 4 + 1] ^= 1;  // node 2 would see its sibling
  const auto report = validate_buffers(StaticTreeBuffers::from_raw(raw), spec);
  EXPECT_EQ(report.failure, ValidationReport::Failure::mask);
  EXPECT_EQ(report.row, 2);
  EXPECT_EQ(report.col, 1);
}

TEST(ValidateBuffers, EveryMaskBitFlipIsCaught) {
  const auto spec = TreeSpec::full({2, 2});
  const auto good = compile_tree(spec).raw();
  const int T = good.num_nodes;
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < T; ++j) {
      auto raw = good;
      raw.attn_mask[i * T + j] ^= 1;
      const auto report = validate_buffers(StaticTreeBuffers::from_raw(raw), spec);
      ASSERT_EQ(report.failure, ValidationReport::Failure::mask) << i << "," << j;
      EXPECT_EQ(report.row, i);
      EXPECT_EQ(report.col, j);
    }
  }
}

TEST(ValidateBuffers, RetrievalRowNotEndingAtLeaf) {
  const auto spec = four_node();
  auto raw = compile_tree(spec).raw();
  // Row 1 is [0, 1, 3]; truncating it leaves a path that ends at inner node 1.
  raw.retrieve_indices[1 * 3 + 2] = -1;
  raw.path_lengths[1] = 2;
  const auto report = validate_buffers(StaticTreeBuffers::from_raw(raw), spec);
  EXPECT_EQ(report.failure, ValidationReport::Failure::retrieval);
  EXPECT_EQ(report.row, 1);
  EXPECT_THAT(report.message, HasSubstr("row 1"));
}

TEST(ValidateBuffers, WrongTreeIndexAndDepth) {
  const auto spec = four_node();
  auto raw = compile_tree(spec).raw();
  raw.tree_indices[3] = 2;
  EXPECT_EQ(validate_buffers(StaticTreeBuffers::from_raw(raw), spec).failure,
            ValidationReport::Failure::tree_indices);
  raw = compile_tree(spec).raw();
  raw.node_depth[3] = 1;
  EXPECT_EQ(validate_buffers(StaticTreeBuffers::from_raw(raw), spec).failure,
            ValidationReport::Failure::depth);
  raw = compile_tree(spec).raw();
  raw.attn_mask.pop_back();
  EXPECT_EQ(validate_buffers(StaticTreeBuffers::from_raw(raw), spec).failure,
            ValidationReport::Failure::shape);
}

class RandomTrees : public ::testing::TestWithParam<int> {};

TEST_P(RandomTrees, StructuralProperties) {
  CounterRng rng(1234, static_cast<std::uint64_t>(GetParam()));
  for (int n = 0; n < 40; ++n) {
    const auto spec = selfcheck::random_tree_spec(rng);
    const auto b = compile_tree(spec);
    ASSERT_LE(b.num_nodes(), 64);
    ASSERT_TRUE(validate_buffers(b, spec).ok()) << validate_buffers(b, spec).message;
    const int T = b.num_nodes();
    for (int i = 0; i < T; ++i) {
      ASSERT_TRUE(b.visible(i, i));
      ASSERT_TRUE(b.visible(i, 0));
      for (int j = 0; j < T; ++j) {
        if (!b.visible(i, j)) continue;
        for (int k = 0; k < T; ++k) {
          if (b.visible(j, k)) {
            ASSERT_TRUE(b.visible(i, k)) << i << " " << j << " " << k;
          }
        }
      }
    }
    // Leaves appear exactly once as a row end; every node appears somewhere.
    std::vector<int> as_end(T, 0), seen(T, 0);
    for (int r = 0; r < b.n_paths(); ++r) {
      const auto row = b.retrieve_row(r);
      ASSERT_EQ(row[0], 0);
      for (int c = 0; c < b.path_lengths()[r]; ++c) {
        seen[row[c]] = 1;
        if (c > 0) {
          ASSERT_EQ(b.node_depth()[row[c]], b.node_depth()[row[c - 1]] + 1);
        }
      }
      for (int c = b.path_lengths()[r]; c < b.row_width(); ++c) ASSERT_EQ(row[c], -1);
      ++as_end[row[b.path_lengths()[r] - 1]];
    }
    for (int i = 0; i < T; ++i) {
      ASSERT_TRUE(seen[i]);
      const bool leaf = std::none_of(b.node_parent().begin(), b.node_parent().end(),
                                     [i](int p) { return p == i; });
      ASSERT_EQ(as_end[i], leaf ? 1 : 0);
    }
    EXPECT_EQ(compile_tree(spec), b);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomTrees, ::testing::Range(0, 5));

TEST(TreeIo, SpecRoundTrip) {
  const auto spec = default_tree(4);
  EXPECT_EQ(tree_spec_from_json(tree_spec_to_json(spec)), spec);
}

TEST(TreeIo, MissingPathsMeansFullTree) {
  const auto j = nlohmann::json::parse(R"({"topk_per_head": [2, 3]})");
  EXPECT_EQ(compile_tree(tree_spec_from_json(j)), compile_tree(TreeSpec::full({2, 3})));
  EXPECT_EQ(TreeSpec::full({2, 3}).num_nodes(), 1 + 2 + 6);
}

TEST(TreeIo, BufferDumpRoundTrip) {
  const auto b = compile_tree(default_tree(3));
  const auto j = buffers_to_json(b);
  EXPECT_EQ(buffers_from_json(j), b);
  EXPECT_EQ(j.at("T"), b.num_nodes());
  EXPECT_EQ(j.at("attn_mask").size(), static_cast<std::size_t>(b.num_nodes()));
}

TEST(TreeIo, RejectsBadJson) {
  EXPECT_THROW(tree_spec_from_json(nlohmann::json::parse(R"({"paths": [[0]]})")), InvalidArgument);
  EXPECT_THROW(tree_spec_from_json(nlohmann::json::parse(R"({"topk_per_head": "x"})")),
               InvalidArgument);
}

}  // namespace
}  // namespace medusa
