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
#include <thread>

#include <CLI11.hpp>

#include "sdedup/client/commands.hpp"

using namespace sdedup;

int main(int argc, char** argv) {
  CLI::App app{"Client for the deduplication server"};
  app.require_subcommand(1);
  app.fallthrough();
  client::ClientOptions opts;
  opts.keystore = "keystore.sdks";
  app.add_option("--server", opts.server)->envname("SDEDUP_SERVER");
  app.add_option("--keystore", opts.keystore)->envname("SDEDUP_KEYSTORE");
  app.add_option("--passphrase", opts.passphrase, "prefer SDEDUP_PASSPHRASE")
      ->envname("SDEDUP_PASSPHRASE");
  app.add_option("--user", opts.user, "override the keystore's user id");
  app.add_option("--kdf-iterations", opts.kdf_iterations, "for new keystores");

  std::string image_path, dest;
  ImageId ref = 0;
  auto* upload = app.add_subcommand("upload", "upload a PNG or BMP image");
  upload->add_option("image", image_path)->required()->check(CLI::ExistingFile);
  auto* download = app.add_subcommand("download", "fetch and decrypt an image");
  download->add_option("image_ref", ref)->required();
  download->add_option("dest", dest)->required();
  auto* serve = app.add_subcommand("serve", "answer key exchanges for held images");
  auto* keystore = app.add_subcommand("keystore", "manage the local keystore");
  keystore->require_subcommand(1);
  keystore->fallthrough();
  auto* ks_init = keystore->add_subcommand("init");
  auto* ks_list = keystore->add_subcommand("list");
  CLI11_PARSE(app, argc, argv);

  std::signal(SIGPIPE, SIG_IGN);
  if (opts.passphrase.empty()) {
    std::cerr << "dedup-client: a passphrase is required (--passphrase or SDEDUP_PASSPHRASE)\n";
    return 1;
  }
  try {
    if (*upload) return client::cmd_upload(opts, image_path, std::cout, std::cerr);
    if (*download) return client::cmd_download(opts, ref, dest, std::cout, std::cerr);
    if (*ks_init) return client::cmd_keystore_init(opts, std::cout, std::cerr);
    if (*ks_list) return client::cmd_keystore_list(opts, std::cout, std::cerr);
    if (*serve) {
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      std::atomic<bool> stop{false};
      std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        stop = true;
      });
      int rc = client::cmd_serve(opts, stop, std::cout, std::cerr);
      if (!stop) {
        // Connection dropped on its own; release the waiter.
        pthread_kill(waiter.native_handle(), SIGTERM);
      }
      waiter.join();
      return rc;
    }
  } catch (const std::exception& e) {
    std::cerr << "dedup-client: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
