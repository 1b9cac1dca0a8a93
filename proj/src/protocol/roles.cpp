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

#include "sdedup/protocol/roles.hpp"

#include "sdedup/common/hash.hpp"

namespace sdedup::proto {
namespace {

// Next message from the server, or an Aborted value for timeouts and
// non-exchange ABORTs.
std::variant<Message, Aborted> await_reply(Connection& conn, std::chrono::milliseconds timeout) {
  auto m = conn.receive_for(timeout);
  if (!m) return Aborted{ReasonCode::kTimeout};
  if (auto* a = std::get_if<Abort>(&*m)) return Aborted{a->reason};
  return std::move(*m);
}

std::string random_ref() { return to_hex(random_array<8>()); }

UploadOutcome store_fresh(ByteView plaintext, const DedupUnique& unique, ClientState& state,
                          Connection& conn) {
  auto key = gen_key();
  auto ct = encrypt_image(key, plaintext);
  conn.send(UploadCt{unique.upload_token, ct.encode()});
  auto reply = await_reply(conn, state.request_timeout);
  if (auto* a = std::get_if<Aborted>(&reply)) return *a;
  auto* ack = std::get_if<Ack>(&std::get<Message>(reply));
  if (!ack || ack->ref != unique.image_ref) return Aborted{ReasonCode::kMalformed};
  return Stored{unique.image_ref, key};
}

UploadOutcome join_existing(const FeatureVector& v, const DedupDuplicate& dup, ClientState& state,
                            Connection& conn) {
  // The server follows DEDUP_RESULT with the exchange parameters.
  auto opened = await_reply(conn, state.request_timeout);
  if (auto* a = std::get_if<Aborted>(&opened)) return *a;
  auto* open = std::get_if<ExchangeOpen>(&std::get<Message>(opened));
  if (!open || open->exchange_id != dup.exchange_id || open->role != ExchangeRole::kUploader) {
    return Aborted{ReasonCode::kMalformed};
  }

  const ExchangeId id = open->exchange_id;
  ExchangeIo io{
      [&](const Message& m) { conn.send(m); },
      [&](Clock::time_point deadline) -> std::optional<Message> {
        for (;;) {
          auto m = conn.receive(deadline);
          if (!m) return m;
          auto scope = exchange_of(*m);
          if ((scope && *scope == id) || std::holds_alternative<Abort>(*m)) return m;
        }
      }};
  ExchangeState ex(id, state.exchange.phase_timeout);
  auto agreed = run_key_agreement(ExchangeRole::kUploader, *open, v, io, ex, state.exchange);
  if (auto* a = std::get_if<Aborted>(&agreed)) return *a;

  std::optional<Message> m;
  m = io.receive(ex.deadline());
  if (!m) {
    conn.send(Abort{ReasonCode::kTimeout, id});
    return Aborted{ReasonCode::kTimeout};
  }
  if (std::holds_alternative<Abort>(*m)) return Aborted{ReasonCode::kPeerAborted};
  auto* wk = std::get_if<WrappedKeyMsg>(&*m);
  if (!wk) {
    conn.send(Abort{ReasonCode::kMalformed, id});
    return Aborted{ReasonCode::kMalformed};
  }
  ImageKey key;
  try {
    key = unwrap_key(std::get<Kek>(agreed), WrappedKey{Ciphertext::decode(wk->wrapped)});
  } catch (const Error&) {
    // Dissimilar images (or a lying server): the KEKs differ and nothing
    // about the holder's key is learned.
    conn.send(Abort{ReasonCode::kAuthFailure, id});
    return Aborted{ReasonCode::kAuthFailure};
  }
  ex.advance(Phase::kKeyWrapped);

  std::variant<Bytes, Aborted> fetched;
  try {
    fetched = fetch_plaintext(conn, open->image_ref, key, state.request_timeout);
  } catch (const Error& e) {
    if (e.code() != Errc::kAuthFailure) throw;
    conn.send(Abort{ReasonCode::kAuthFailure, id});
    return Aborted{ReasonCode::kAuthFailure};
  }
  if (auto* a = std::get_if<Aborted>(&fetched)) return *a;

  conn.send(ExchangeDone{id});
  auto reply = await_reply(conn, state.request_timeout);
  if (auto* a = std::get_if<Aborted>(&reply)) return *a;
  auto* ack = std::get_if<Ack>(&std::get<Message>(reply));
  if (!ack || ack->ref != open->image_ref) return Aborted{ReasonCode::kMalformed};
  ex.advance(Phase::kDone);
  return Deduplicated{open->image_ref, key, dup.collisions, std::move(std::get<Bytes>(fetched))};
}

}  // namespace

GenerationDigests digests_for(const Params& params, const FeatureVector& v) {
  GenerationDigests out;
  for (const auto& g : params.generations) {
    DigestSet set;
    set.reserve(g.params.size());
    for (const auto& p : g.params) set.push_back(slsh(p, v));
    out.emplace(g.generation_id, std::move(set));
  }
  return out;
}

const Params& ensure_params(Connection& conn, ClientState& state) {
  if (state.params) return *state.params;
  conn.send(GetParams{});
  auto m = conn.receive_for(state.request_timeout);
  if (!m) throw Error(Errc::kTimeout, "no PARAMS from server");
  auto* p = std::get_if<Params>(&*m);
  if (!p) throw Error(Errc::kProtocol, "expected PARAMS");
  state.params = std::move(*p);
  return *state.params;
}

UploadOutcome uploader_run(ByteView plaintext, const FeatureVector& v, ClientState& state,
                           Connection& conn) {
  conn.send(Hello{state.user_id, false});
  const auto ref = random_ref();
  // A rollover between GET_PARAMS and UPLOAD_HASHES makes the server answer
  // with fresh PARAMS; recompute and retry a few times.
  for (int attempt = 0; attempt < 4; ++attempt) {
    const auto& params = ensure_params(conn, state);
    conn.send(UploadHashes{state.user_id, ref, digests_for(params, v)});
    auto reply = await_reply(conn, state.request_timeout);
    if (auto* a = std::get_if<Aborted>(&reply)) return *a;
    auto& msg = std::get<Message>(reply);
    if (auto* fresh = std::get_if<Params>(&msg)) {
      state.params = std::move(*fresh);
      continue;
    }
    auto* result = std::get_if<DedupResult>(&msg);
    if (!result) return Aborted{ReasonCode::kMalformed};
    if (auto* u = std::get_if<DedupUnique>(&result->outcome)) {
      return store_fresh(plaintext, *u, state, conn);
    }
    return join_existing(v, std::get<DedupDuplicate>(result->outcome), state, conn);
  }
  return Aborted{ReasonCode::kMalformed};
}

std::variant<Bytes, Aborted> fetch_plaintext(Connection& conn, ImageId image_ref,
                                             const ImageKey& key,
                                             std::chrono::milliseconds timeout) {
  conn.send(FetchCt{image_ref});
  auto reply = await_reply(conn, timeout);
  if (auto* a = std::get_if<Aborted>(&reply)) return *a;
  auto* ct = std::get_if<Ct>(&std::get<Message>(reply));
  if (!ct) return Aborted{ReasonCode::kMalformed};
  Ciphertext parsed;
  try {
    parsed = Ciphertext::decode(ct->ciphertext);
  } catch (const Error&) {
    throw Error(Errc::kAuthFailure, "ciphertext too short");
  }
  return decrypt_image(key, parsed);
}

}  // namespace sdedup::proto
