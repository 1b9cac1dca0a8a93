// Copyright 2026 The sdedup Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "sdedup/server/runner.hpp"

using namespace sdedup;

int main(int argc, char** argv) {
  CLI::App app{"Near-duplicate image deduplication server"};
  std::string listen = "127.0.0.1:7433";
  std::string data_dir = "sdedup-data";
  int tables = 6, bits = 24, threshold = 0;
  double rate = 1, burst = 60;
  std::uint64_t quota_mb = 1024;
  int pake_bits = 2048;
  app.add_option("--listen", listen, "address:port to bind")->envname("LISTEN");
  app.add_option("--data-dir", data_dir, "blob store, log and checkpoint directory")
      ->envname("DATA_DIR");
  app.add_option("--tables", tables)->envname("TABLES");
  app.add_option("--hash-bits", bits)->envname("HASH_BITS");
  app.add_option("--threshold", threshold, "collisions needed; 0 picks ceil((tables+1)/2)")
      ->envname("THRESHOLD");
  app.add_option("--rate", rate, "queries per second per user")->envname("RATE");
  app.add_option("--burst", burst)->envname("BURST");
  app.add_option("--quota-mb", quota_mb)->envname("QUOTA_MB");
  app.add_option("--pake-bits", pake_bits)
      ->envname("PAKE_BITS")
      ->check(CLI::IsMember({1024, 2048, 4096, 8192}));
  CLI11_PARSE(app, argc, argv);

  // Signals go to sigwait below, not to whichever worker thread is running.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::signal(SIGPIPE, SIG_IGN);

  try {
    server::ServerConfig cfg;
    cfg.dedup = DedupConfig::with_defaults(tables, bits);
    if (threshold > 0) cfg.dedup.threshold = threshold;
    cfg.dedup.validate();
    cfg.rate = rate;
    cfg.burst = burst;
    cfg.quota_bytes = quota_mb << 20;
    cfg.pake_bits = pake_bits;
    cfg.data_dir = data_dir;
    server::ServerCore core(cfg);
    server::ServerRunner runner(core);
    auto port = runner.listen(listen);
    std::cerr << "listening on port " << port << ", " << core.image_count() << " images\n";
    int sig = 0;
    sigwait(&set, &sig);
    std::cerr << "shutting down\n";
    runner.stop();
  } catch (const std::exception& e) {
    std::cerr << "dedup-server: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
