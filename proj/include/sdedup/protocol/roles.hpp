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

#include <optional>
#include <string>
#include <variant>

#include "sdedup/protocol/exchange.hpp"

namespace sdedup::proto {

// What an uploading client keeps between requests.
struct ClientState {
  std::string user_id;
  std::optional<Params> params;
  ExchangeSettings exchange;
  std::chrono::milliseconds request_timeout{30000};
};

struct Stored {
  ImageId image_ref = 0;
  ImageKey key;
};

struct Deduplicated {
  ImageId image_ref = 0;
  ImageKey key;
  std::uint32_t collisions = 0;
  Bytes plaintext;  // the holder's original, decrypted
};

using UploadOutcome = std::variant<Stored, Deduplicated, Aborted>;

// Digests of v under every generation's parameters.
GenerationDigests digests_for(const Params& params, const FeatureVector& v);

// Sends GET_PARAMS unless the state already holds a copy.
const Params& ensure_params(Connection& conn, ClientState& state);

// Fig. 3 client side: hashes, then either a fresh encrypted upload or the
// access-control exchange with a holder followed by a ciphertext fetch.
// Transport failures surface as Error(kTransport).
UploadOutcome uploader_run(ByteView plaintext, const FeatureVector& v, ClientState& state,
                           Connection& conn);

// FETCH_CT and decrypt. Error(kAuthFailure) for a ciphertext that fails to
// authenticate under `key`.
std::variant<Bytes, Aborted> fetch_plaintext(Connection& conn, ImageId image_ref,
                                             const ImageKey& key,
                                             std::chrono::milliseconds timeout);

}  // namespace sdedup::proto
