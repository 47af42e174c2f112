#pragma once

#include <string>

namespace prism::cli {

// Exit codes: 0 success, 2 spec/config error, 3 data error, 4 checkpoint
// error, 5 numeric divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSpec = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitCheckpoint = 4;
inline constexpr int kExitNumeric = 5;

struct CommonArgs {
  std::string spec_path;
  std::string out_dir;          // empty: timestamped dir under spec.out_dir
  std::string checkpoint_path;  // eval / trace / importance
  long seed = -1;               // train: restrict to this single seed
  long window = 0;              // trace: test window index
  int threads = -1;             // override train.threads when >= 0
};

int cmd_train(const CommonArgs& args);
int cmd_eval(const CommonArgs& args);
int cmd_decompose(const CommonArgs& args);
int cmd_trace(const CommonArgs& args);
int cmd_importance(const CommonArgs& args);

/// Full argv entry point used by the binary.
int run(int argc, const char* const* argv);

}  // namespace prism::cli
