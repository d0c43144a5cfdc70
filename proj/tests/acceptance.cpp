#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "spde/verify.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria, one pass/fail line each"};
  std::vector<int> ids;
  spde::VerifyOptions opt;
  app.add_option("--criterion,-c", ids, "criterion number(s), default all")->check(CLI::Range(1, spde::kCriterionCount));
  app.add_option("--spde", opt.spde_exe, "path to the spde executable (criterion 10)");
  app.add_option("--scratch", opt.scratch_dir, "directory for temporary run output");
  CLI11_PARSE(app, argc, argv);
  if (ids.empty())
    for (int i = 1; i <= spde::kCriterionCount; ++i) ids.push_back(i);
  if (opt.spde_exe.empty()) {
    auto guess = std::filesystem::canonical("/proc/self/exe").parent_path().parent_path() / "tools" / "spde";
    if (std::filesystem::exists(guess)) opt.spde_exe = guess.string();
  }
  int failed = 0;
  for (int id : ids) {
    auto r = spde::run_criterion(id, opt);
    std::printf("%s\n", spde::report_line(r).c_str());
    std::fflush(stdout);
    if (!r.pass) ++failed;
  }
  return failed ? 1 : 0;
}
