#include <gtest/gtest.h>

#include "datashield/net.hpp"

namespace {

// Arms the network guard for the whole run; any outbound attempt fails the
// test that made it, and the count is checked once more at the end.
class NoNetwork : public ::testing::Environment {
 public:
  void SetUp() override {
    datashield::net::reset_outbound_attempts();
    guard_ = std::make_unique<datashield::net::Guard>();
  }
  void TearDown() override {
    EXPECT_EQ(datashield::net::outbound_attempts(), 0u) << "outbound network attempts";
    guard_.reset();
  }

 private:
  std::unique_ptr<datashield::net::Guard> guard_;
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::AddGlobalTestEnvironment(new NoNetwork);
  return RUN_ALL_TESTS();
}
