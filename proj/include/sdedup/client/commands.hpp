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

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

#include "sdedup/client/keystore.hpp"
#include "sdedup/protocol/roles.hpp"

namespace sdedup::client {

// Process exit codes.
enum Exit : int {
  kExitOk = 0,
  kExitDecode = 1,
  kExitAborted = 2,
  kExitRateLimited = 3,
  kExitAuthFailure = 4,
  kExitNoKey = 5,
};

struct ClientOptions {
  std::string server = "127.0.0.1:7433";
  std::filesystem::path keystore;
  std::string passphrase;
  std::string user;  // overrides the keystore's user id when set
  std::uint32_t kdf_iterations = Keystore::kDefaultIterations;
  proto::ExchangeSettings exchange;
  std::chrono::milliseconds request_timeout{30000};
  // Defaults to TCP to `server`. Tests plug in loopback connections.
  std::function<proto::ConnectionPtr()> connect;
};

// Each command prints one JSON report line to `out` and diagnostics to
// `err`, and returns an Exit code.
int cmd_upload(const ClientOptions& opts, const std::filesystem::path& image, std::ostream& out,
               std::ostream& err);
int cmd_download(const ClientOptions& opts, ImageId image_ref, const std::filesystem::path& dest,
                 std::ostream& out, std::ostream& err);
// Answers exchange requests until `stop` is set or the connection drops.
int cmd_serve(const ClientOptions& opts, const std::atomic<bool>& stop, std::ostream& out,
              std::ostream& err);
int cmd_keystore_init(const ClientOptions& opts, std::ostream& out, std::ostream& err);
int cmd_keystore_list(const ClientOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace sdedup::client
