#include <gtest/gtest.h>

#include <cstdlib>

#include "datashield/datashield.h"

namespace {

// Arms the library's guard in this process; child CLI processes inherit
// DATASHIELD_NO_NETWORK and arm their own.
class NoNetwork : public ::testing::Environment {
 public:
  void SetUp() override {
    ::setenv("DATASHIELD_NO_NETWORK", "1", 1);
    ds_network_guard(1);
  }
  void TearDown() override { EXPECT_EQ(ds_outbound_attempts(), 0u) << "outbound connection attempted"; }
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::AddGlobalTestEnvironment(new NoNetwork);
  return RUN_ALL_TESTS();
}
