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

#include "sdedup/client/commands.hpp"

#include <condition_variable>
#include <deque>
#include <list>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "sdedup/features/image.hpp"

namespace sdedup::client {
namespace {

using nlohmann::json;
using proto::ReasonCode;

proto::ConnectionPtr connect(const ClientOptions& opts) {
  return opts.connect ? opts.connect() : proto::tcp_connect(opts.server);
}

Keystore load_keystore(const ClientOptions& opts) {
  auto ks = Keystore::open_or_create(opts.keystore, opts.passphrase, opts.kdf_iterations);
  if (!opts.user.empty()) ks.set_user_id(opts.user);
  return ks;
}

int report_abort(std::ostream& out, std::ostream& err, ReasonCode reason) {
  out << json{{"status", "Aborted"}, {"reason", proto::to_string(reason)}}.dump() << '\n';
  err << "aborted: " << proto::to_string(reason) << '\n';
  return reason == ReasonCode::kRateLimited ? kExitRateLimited : kExitAborted;
}

// Per-exchange inbox fed by the serve loop's reader.
struct Inbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<proto::Message> queue;
  bool closed = false;

  void push(proto::Message m) {
    std::lock_guard lock(mu);
    queue.push_back(std::move(m));
    cv.notify_one();
  }
  void close() {
    std::lock_guard lock(mu);
    closed = true;
    cv.notify_all();
  }
  std::optional<proto::Message> pop(proto::Clock::time_point deadline) {
    std::unique_lock lock(mu);
    if (!cv.wait_until(lock, deadline, [&] { return !queue.empty() || closed; })) {
      return std::nullopt;
    }
    if (queue.empty()) throw Error(Errc::kTransport, "connection closed");
    auto m = std::move(queue.front());
    queue.pop_front();
    return m;
  }
};

}  // namespace

int cmd_upload(const ClientOptions& opts, const std::filesystem::path& image, std::ostream& out,
               std::ostream& err) {
  Bytes file;
  std::optional<FeatureVector> features;
  try {
    file = read_file(image);
    features = extract_features(decode_image(file));
  } catch (const Error& e) {
    out << json{{"status", "Error"}, {"reason", "DecodeFailed"}}.dump() << '\n';
    err << "cannot use " << image.string() << ": " << e.what() << '\n';
    return kExitDecode;
  }
  const auto& v = *features;

  auto ks = load_keystore(opts);
  proto::ClientState state{ks.user_id(), std::nullopt, opts.exchange, opts.request_timeout};
  auto conn = connect(opts);
  auto outcome = proto::uploader_run(file, v, state, *conn);
  conn->close();

  if (auto* a = std::get_if<proto::Aborted>(&outcome)) return report_abort(out, err, a->reason);
  if (auto* s = std::get_if<proto::Stored>(&outcome)) {
    ks.put(KeyRecord{s->image_ref, s->key, v, true});
    ks.save();
    out << json{{"status", "Stored"}, {"image_ref", s->image_ref}}.dump() << '\n';
    return kExitOk;
  }
  const auto& d = std::get<proto::Deduplicated>(outcome);
  // Our own vector is kept: future exchanges hash what we hold.
  ks.put(KeyRecord{d.image_ref, d.key, v, false});
  ks.save();
  out << json{{"status", "Deduplicated"},
              {"image_ref", d.image_ref},
              {"collisions", d.collisions},
              {"identical", d.plaintext == file}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_download(const ClientOptions& opts, ImageId image_ref, const std::filesystem::path& dest,
                 std::ostream& out, std::ostream& err) {
  auto ks = load_keystore(opts);
  auto rec = ks.find(image_ref);
  if (!rec) {
    out << json{{"status", "Error"}, {"reason", "NoKey"}, {"image_ref", image_ref}}.dump() << '\n';
    err << "no key for image " << image_ref << " in this keystore\n";
    return kExitNoKey;
  }
  auto conn = connect(opts);
  conn->send(proto::Hello{ks.user_id(), false});
  std::variant<Bytes, proto::Aborted> got;
  try {
    got = proto::fetch_plaintext(*conn, image_ref, rec->key, opts.request_timeout);
  } catch (const Error& e) {
    if (e.code() != Errc::kAuthFailure) throw;
    out << json{{"status", "Error"}, {"reason", "AuthFailure"}, {"image_ref", image_ref}}.dump()
        << '\n';
    err << "ciphertext for image " << image_ref << " failed authentication\n";
    return kExitAuthFailure;
  }
  conn->close();
  if (auto* a = std::get_if<proto::Aborted>(&got)) return report_abort(out, err, a->reason);
  write_file(dest, std::get<Bytes>(got));
  out << json{{"status", "Downloaded"}, {"image_ref", image_ref}, {"path", dest.string()}}.dump()
      << '\n';
  return kExitOk;
}

int cmd_serve(const ClientOptions& opts, const std::atomic<bool>& stop, std::ostream& out,
              std::ostream& err) {
  auto ks = load_keystore(opts);
  ks.save();
  std::shared_ptr<proto::Connection> conn = connect(opts);
  conn->send(proto::Hello{ks.user_id(), true});

  std::mutex log_mu;
  auto log = [&](const json& j) {
    std::lock_guard lock(log_mu);
    out << j.dump() << '\n' << std::flush;
  };

  struct Running {
    proto::ExchangeId id = 0;
    std::shared_ptr<Inbox> inbox;
    std::thread thread;
    std::atomic<bool> finished{false};
  };
  std::map<proto::ExchangeId, std::shared_ptr<Inbox>> inboxes;
  std::list<Running> running;
  int rc = kExitOk;

  auto reap = [&] {
    for (auto it = running.begin(); it != running.end();) {
      if (it->finished) {
        it->thread.join();
        inboxes.erase(it->id);
        it = running.erase(it);
      } else {
        ++it;
      }
    }
  };

  while (!stop) {
    std::optional<proto::Message> m;
    try {
      m = conn->receive_for(std::chrono::milliseconds(200));
    } catch (const Error& e) {
      err << "connection lost: " << e.what() << '\n';
      rc = kExitAborted;
      break;
    }
    reap();
    if (!m) continue;
    auto id = proto::exchange_of(*m);
    if (!id) continue;
    if (auto* open = std::get_if<proto::ExchangeOpen>(&*m)) {
      auto rec = ks.find(open->image_ref);
      if (!rec || open->role != proto::ExchangeRole::kHolder) {
        conn->send(proto::Abort{ReasonCode::kBadToken, open->exchange_id});
        log({{"event", "exchange"}, {"exchange_id", open->exchange_id}, {"result", "Refused"}});
        continue;
      }
      auto inbox = std::make_shared<Inbox>();
      inboxes[open->exchange_id] = inbox;
      auto& r = running.emplace_back();
      r.id = open->exchange_id;
      r.inbox = inbox;
      r.thread = std::thread([&, open = *open, rec = std::move(*rec), inbox] {
        proto::ExchangeIo io{[&](const proto::Message& msg) { conn->send(msg); },
                             [inbox](proto::Clock::time_point d) { return inbox->pop(d); }};
        auto result = proto::holder_serve(open, rec.key, rec.vector, io, opts.exchange);
        if (auto* a = std::get_if<proto::Aborted>(&result)) {
          log({{"event", "exchange"},
               {"exchange_id", open.exchange_id},
               {"result", "Aborted"},
               {"reason", proto::to_string(a->reason)}});
        } else {
          log({{"event", "exchange"}, {"exchange_id", open.exchange_id}, {"result", "KeyOffered"}});
        }
        r.finished = true;
      });
      continue;
    }
    auto it = inboxes.find(*id);
    if (it != inboxes.end()) {
      // An ABORT ends the exchange; later traffic for it is dropped.
      const bool last = std::holds_alternative<proto::Abort>(*m);
      it->second->push(std::move(*m));
      if (last) inboxes.erase(it);
    }
  }

  conn->close();
  for (auto& [_, inbox] : inboxes) inbox->close();
  for (auto& r : running) {
    r.inbox->close();
    r.thread.join();
  }
  ks.save();
  return rc;
}

int cmd_keystore_init(const ClientOptions& opts, std::ostream& out, std::ostream& err) {
  if (std::filesystem::exists(opts.keystore)) {
    err << "keystore already exists: " << opts.keystore.string() << '\n';
    return kExitAborted;
  }
  auto ks = Keystore::create(opts.keystore, opts.passphrase, opts.kdf_iterations);
  if (!opts.user.empty()) ks.set_user_id(opts.user);
  ks.save();
  out << json{{"status", "Created"}, {"user_id", ks.user_id()}}.dump() << '\n';
  return kExitOk;
}

int cmd_keystore_list(const ClientOptions& opts, std::ostream& out, std::ostream&) {
  auto ks = Keystore::open(opts.keystore, opts.passphrase);
  for (const auto& [ref, r] : ks.records()) {
    out << json{{"image_ref", ref}, {"origin", r.origin}, {"dim", r.vector.dim()}}.dump() << '\n';
  }
  return kExitOk;
}

}  // namespace sdedup::client
