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


#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "acceptance.hpp"
#include "advfeat/parallel.hpp"

using namespace advfeat::acceptance;

int main(int argc, char** argv) {
  advfeat::retain_heap_memory();
  CLI::App app{"advfeat acceptance suite"};
  std::vector<int> only;
  std::string cache = "acceptance_cache";
  bool train_only = false, retrain = false;
  app.add_option("--criterion", only, "run only these criteria (repeatable)")->check(CLI::Range(1, 9));
  app.add_option("--cache", cache, "directory for the trained experiment checkpoints");
  app.add_flag("--train-only", train_only, "train the shared experiment models and exit");
  app.add_flag("--retrain", retrain, "retrain models even when a cached checkpoint exists");
  CLI11_PARSE(app, argc, argv);

  const Options opts{cache};
  if (train_only) {
    // A fresh ctest run retrains unless reuse is requested explicitly.
    const char* reuse = std::getenv("ADVFEAT_ACCEPTANCE_REUSE");
    const bool force = retrain || !(reuse && std::string(reuse) == "1");
    try {
      train_runs(opts.cache, force);
    } catch (const std::exception& e) {
      std::cerr << "training failed: " << e.what() << "\n";
      return 1;
    }
    return 0;
  }
  if (retrain) train_runs(opts.cache, true);

  using Fn = Verdict (*)(const Options&);
  const Fn criteria[] = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                         criterion_6, criterion_7, criterion_8, criterion_9};
  if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  bool all = true;
  std::vector<std::string> lines;
  for (int n : only) {
    Verdict v;
    try {
      v = criteria[n - 1](opts);
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what(), {}};
    }
    all = all && v.pass;
    for (const auto& d : v.details) std::printf("    %s\n", d.c_str());
    char line[1024];
    std::snprintf(line, sizeof line, "CRITERION %d %s  %s", n, v.pass ? "PASS" : "FAIL", v.summary.c_str());
    std::printf("%s\n", line);
    std::fflush(stdout);
    lines.push_back(line);
  }
  if (only.size() > 1) {
    std::printf("\nsummary\n");
    for (const auto& l : lines) std::printf("%s\n", l.c_str());
  }
  return all ? 0 : 1;
}
