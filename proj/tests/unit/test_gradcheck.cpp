// SPDX-License-Identifier: Apache-2.0
#include "degs/gradcheck.hpp"

#include <gtest/gtest.h>

namespace degs {
namespace {

TEST(GradCheck, SmallSuitePassesEveryCategory) {
  GradCheckOptions o;
  o.scenes = 3;
  o.max_splats = 5;
  o.seed = 17;
  const GradCheckReport r = run_gradcheck(o);
  ASSERT_FALSE(r.checks.empty());
  for (const auto& c : r.checks) {
    EXPECT_TRUE(c.passed()) << c.name << " max_rel=" << c.max_rel_error;
  }
  EXPECT_TRUE(r.passed());
  EXPECT_NE(format_gradcheck(r).find("rasterizer"), std::string::npos);
}

TEST(GradCheck, CoversEveryDifferentiableModule) {
  GradCheckOptions o;
  o.scenes = 1;
  o.max_splats = 3;
  const GradCheckReport r = run_gradcheck(o);
  for (const char* prefix : {"rasterizer.", "encoder.", "mlp.", "embeddings", "deform.", "fusion."}) {
    bool found = false;
    for (const auto& c : r.checks) found = found || c.name.rfind(prefix, 0) == 0;
    EXPECT_TRUE(found) << prefix;
  }
}

}  // namespace
}  // namespace degs
