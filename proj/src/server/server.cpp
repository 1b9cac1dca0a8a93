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

#include "sdedup/server/server.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "sdedup/common/hash.hpp"
#include "sdedup/features/image.hpp"

namespace fs = std::filesystem;

namespace sdedup::server {

using proto::ExchangeRole;
using proto::Message;
using proto::Phase;
using proto::ReasonCode;

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'D', 'C', 'K', 'P', 'T', '0', '1'};

std::uint64_t unix_now() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
}

void put_image(ByteWriter& w, const ImageRecord& r) {
  w.u64(r.image_ref);
  w.raw(r.blob);
  w.u64(r.size);
  w.u32(r.generation);
  w.u16(static_cast<std::uint16_t>(r.access_holders.size()));
  for (std::size_t i = 0; i < r.access_holders.size(); ++i) {
    w.str(r.access_holders[i]);
    w.u64(r.exchange_counts[i]);
  }
}

ImageRecord get_image(ByteReader& r) {
  ImageRecord out;
  out.image_ref = r.u64();
  out.blob = r.fixed<32>();
  out.size = r.u64();
  out.generation = r.u32();
  auto n = r.u16();
  if (n == 0) throw Error(Errc::kCorruptSnapshot, "image without holders");
  for (int i = 0; i < n; ++i) {
    out.access_holders.push_back(r.str());
    out.exchange_counts.push_back(r.u64());
  }
  return out;
}

void complete_exchange(ImageRecord& image, const std::string& holder, const std::string& user) {
  auto it = std::find(image.access_holders.begin(), image.access_holders.end(), holder);
  if (it == image.access_holders.end()) throw Error(Errc::kCorruptSnapshot, "unknown holder");
  ++image.exchange_counts[static_cast<std::size_t>(it - image.access_holders.begin())];
  if (std::find(image.access_holders.begin(), image.access_holders.end(), user) ==
      image.access_holders.end()) {
    image.access_holders.push_back(user);
    image.exchange_counts.push_back(0);
  }
}

}  // namespace

std::optional<std::size_t> select_counterpart(const ImageRecord& image,
                                              const std::function<bool(const std::string&)>& online) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < image.access_holders.size(); ++i) {
    if (!online(image.access_holders[i])) continue;
    if (!best || image.exchange_counts[i] < image.exchange_counts[*best]) best = i;
  }
  return best;
}

struct ServerCore::Outbox {
  Sink sink;
  std::mutex q_mu, send_mu;
  std::deque<Message> queue;
};

struct ServerCore::Conn {
  std::shared_ptr<Outbox> box;
  std::string user;
  bool serving = false;
};

struct ServerCore::Pending {
  std::string user;
  ImageId image_ref = 0;
  GenerationId generation = 0;
  DigestSet digests;
  Clock::time_point expires;
};

struct ServerCore::Exchange {
  proto::ExchangeState state;
  ImageId image = 0;
  std::string uploader, holder;
  ConnId uploader_conn = 0, holder_conn = 0;
  bool shared[2] = {false, false};
  bool pake[2][2] = {{false, false}, {false, false}};
  bool fetch_granted = false;
};

// Messages queued while locks are held go out, in queue order, once the
// batch is destroyed after the locks are released.
class ServerCore::Batch {
 public:
  Batch() = default;
  Batch(const Batch&) = delete;
  Batch& operator=(const Batch&) = delete;

  void push(const std::shared_ptr<Outbox>& box, Message m) {
    if (!box) return;
    {
      std::lock_guard lock(box->q_mu);
      box->queue.push_back(std::move(m));
    }
    if (std::find(touched_.begin(), touched_.end(), box) == touched_.end()) touched_.push_back(box);
  }

  ~Batch() {
    for (auto& box : touched_) {
      std::lock_guard send(box->send_mu);
      for (;;) {
        Message m;
        {
          std::lock_guard lock(box->q_mu);
          if (box->queue.empty()) break;
          m = std::move(box->queue.front());
          box->queue.pop_front();
        }
        try {
          box->sink(m);
        } catch (...) {
          // The connection went away; its reader will detach it.
        }
      }
    }
  }

 private:
  std::vector<std::shared_ptr<Outbox>> touched_;
};

ServerCore::ServerCore(ServerConfig config)
    : config_(std::move(config)),
      limiter_(config_.burst, config_.rate, config_.now),
      blobs_(config_.data_dir.empty() ? fs::path() : config_.data_dir / "blobs") {
  config_.dedup.validate();
  if (!config_.now) config_.now = Clock::now;
  index_config_ = config_.dedup;
  index_config_.rollover_capacity = ~std::uint64_t{0};
  GroupParams::get(config_.pake_bits);  // rejects unsupported sizes early
  restore();
}

ServerCore::~ServerCore() {
  if (wal_) {
    try {
      checkpoint();
    } catch (...) {
      // The log alone is enough to recover.
    }
  }
}

void ServerCore::hook(std::string_view point) const {
  if (config_.crash_hook) config_.crash_hook(point);
}

// --- durability ---------------------------------------------------------

void ServerCore::log_generation(const TableGeneration& g) {
  if (!wal_) return;
  ByteWriter w;
  w.u32(g.generation_id);
  w.u64(g.created_at);
  w.u32(static_cast<std::uint32_t>(index_config_.dim));
  w.u32(static_cast<std::uint32_t>(index_config_.bits));
  w.u16(static_cast<std::uint16_t>(g.params.size()));
  for (const auto& p : g.params) w.raw(p.seed());
  wal_->append(WalType::kGenerationCreated, w.bytes(), config_.crash_hook);
}

// Caller holds commit_mu_ and no other lock.
void ServerCore::open_next_generation() {
  std::vector<Seed> seeds;
  for (int x = 0; x < index_config_.tables; ++x) seeds.push_back(random_array<32>());
  GenerationId id;
  {
    std::shared_lock lock(index_mu_);
    id = index_ ? index_->newest().generation_id + 1 : 1;
  }
  auto created = unix_now();
  auto g = empty_generation(index_config_, id, seeds, created);
  log_generation(g);
  std::unique_lock lock(index_mu_);
  if (!index_) {
    std::vector<TableGeneration> gens;
    gens.push_back(std::move(g));
    index_.emplace(index_config_, std::move(gens));
  } else {
    index_->open_generation(id, seeds, created);
  }
  rebuild_params();
}

// Caller holds index_mu_ exclusively (or is the constructor).
void ServerCore::rebuild_params() {
  auto p = std::make_shared<proto::Params>();
  p->pake_bits = static_cast<std::uint32_t>(config_.pake_bits);
  for (const auto& g : index_->generations()) p->generations.push_back({g.generation_id, g.params});
  params_ = std::move(p);
}

void ServerCore::apply_record(const WalRecord& rec) {
  ByteReader r(rec.payload, Errc::kCorruptSnapshot);
  switch (rec.type) {
    case WalType::kGenerationCreated: {
      auto id = r.u32();
      auto created = r.u64();
      auto dim = r.u32();
      auto bits = r.u32();
      auto t = r.u16();
      if (dim != static_cast<std::uint32_t>(index_config_.dim) ||
          bits != static_cast<std::uint32_t>(index_config_.bits) || t != index_config_.tables) {
        throw Error(Errc::kCorruptSnapshot, "logged generation does not match configuration");
      }
      std::vector<Seed> seeds;
      for (int x = 0; x < t; ++x) seeds.push_back(r.fixed<32>());
      r.expect_done();
      if (index_ && index_->generation(id)) return;  // already in the checkpoint
      if (!index_) {
        std::vector<TableGeneration> gens;
        gens.push_back(empty_generation(index_config_, id, seeds, created));
        index_.emplace(index_config_, std::move(gens));
      } else {
        index_->open_generation(id, seeds, created);
      }
      return;
    }
    case WalType::kImageCommitted: {
      ImageRecord img;
      img.image_ref = r.u64();
      img.generation = r.u32();
      auto owner = r.str();
      img.blob = r.fixed<32>();
      img.size = r.u64();
      auto t = r.u16();
      DigestSet digests;
      for (int x = 0; x < t; ++x) digests.emplace_back(r.fixed<32>());
      r.expect_done();
      if (!index_) throw Error(Errc::kCorruptSnapshot, "image logged before any generation");
      if (images_.contains(img.image_ref)) return;
      img.access_holders.push_back(owner);
      img.exchange_counts.push_back(0);
      try {
        index_->insert_into(img.generation, img.image_ref, digests);
      } catch (const Error& e) {
        throw Error(Errc::kCorruptSnapshot, std::string("log replay: ") + e.what());
      }
      quota_used_[owner] += img.size;
      images_.emplace(img.image_ref, std::move(img));
      return;
    }
    case WalType::kExchangeCompleted: {
      auto ref = r.u64();
      auto holder = r.str();
      auto user = r.str();
      r.expect_done();
      auto it = images_.find(ref);
      if (it == images_.end()) throw Error(Errc::kCorruptSnapshot, "exchange on unknown image");
      complete_exchange(it->second, holder, user);
      return;
    }
  }
  throw Error(Errc::kCorruptSnapshot, "unknown log record");
}

void ServerCore::restore() {
  if (config_.data_dir.empty()) {
    std::lock_guard c(commit_mu_);
    open_next_generation();
    return;
  }
  fs::create_directories(config_.data_dir);
  const auto ckpt_path = config_.data_dir / "checkpoint.bin";
  const auto wal_path = config_.data_dir / "wal.log";

  std::uint64_t offset = 0;
  if (fs::exists(ckpt_path)) {
    auto bytes = read_file(ckpt_path.string());
    if (bytes.size() < sizeof kCheckpointMagic + 32) {
      throw Error(Errc::kCorruptSnapshot, "checkpoint truncated");
    }
    ByteView body = ByteView(bytes).first(bytes.size() - 32);
    if (sha256(body) != *reinterpret_cast<const Digest32*>(bytes.data() + body.size())) {
      throw Error(Errc::kCorruptSnapshot, "checkpoint checksum mismatch");
    }
    ByteReader r(body, Errc::kCorruptSnapshot);
    auto magic = r.raw(sizeof kCheckpointMagic);
    if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
      throw Error(Errc::kCorruptSnapshot, "bad checkpoint magic");
    }
    offset = r.u64();
    std::vector<TableGeneration> gens;
    auto ng = r.u32();
    for (std::uint32_t i = 0; i < ng; ++i) gens.push_back(decode_generation(r.blob()));
    if (!gens.empty()) index_.emplace(index_config_, std::move(gens));
    auto ni = r.u32();
    for (std::uint32_t i = 0; i < ni; ++i) {
      auto img = get_image(r);
      quota_used_[img.access_holders.front()] += img.size;
      images_.emplace(img.image_ref, std::move(img));
    }
    r.expect_done();
  }

  std::uint64_t good_end = 0;
  for (const auto& rec : Wal::read(wal_path, offset, good_end)) apply_record(rec);
  wal_ = std::make_unique<Wal>(wal_path, good_end);

  // Index and metadata must describe the same images.
  if (index_) {
    if (index_->size() != images_.size()) {
      throw Error(Errc::kCorruptSnapshot, "index and image records disagree");
    }
    for (const auto& [ref, img] : images_) {
      if (!index_->contains(ref)) throw Error(Errc::kCorruptSnapshot, "image missing from index");
    }
  } else if (!images_.empty()) {
    throw Error(Errc::kCorruptSnapshot, "images without an index");
  }

  // Blobs: every committed one must be there; anything else is debris from
  // an upload that never reached the log.
  std::set<Digest32> referenced;
  for (const auto& [ref, img] : images_) {
    if (!blobs_.contains(img.blob)) throw Error(Errc::kCorruptSnapshot, "committed blob missing");
    referenced.insert(img.blob);
    next_image_ref_ = std::max(next_image_ref_, ref + 1);
  }
  for (const auto& d : blobs_.list()) {
    if (!referenced.contains(d)) blobs_.remove(d);
  }
  for (const auto& e : fs::directory_iterator(config_.data_dir / "blobs")) {
    if (e.path().extension() == ".tmp") fs::remove(e.path());
  }

  std::lock_guard c(commit_mu_);
  if (!index_) {
    open_next_generation();
  } else {
    {
      std::unique_lock lock(index_mu_);
      rebuild_params();
    }
    // The crash may have hit between a commit that filled the newest
    // generation and the rollover record.
    if (index_->newest().entry_count() >= config_.dedup.rollover_capacity) open_next_generation();
  }
}

// Caller holds commit_mu_.
void ServerCore::write_checkpoint() {
  if (!wal_) return;
  ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.u64(wal_->size());
  {
    std::shared_lock lock(index_mu_);
    w.u32(static_cast<std::uint32_t>(index_->generations().size()));
    for (const auto& g : index_->generations()) w.blob(encode_generation(g));
    std::lock_guard meta(meta_mu_);
    w.u32(static_cast<std::uint32_t>(images_.size()));
    for (const auto& [ref, img] : images_) put_image(w, img);
  }
  auto digest = sha256(w.bytes());
  w.raw(digest);
  write_file_atomic(config_.data_dir / "checkpoint.bin", w.bytes());
  commits_since_checkpoint_ = 0;
}

void ServerCore::checkpoint() {
  std::lock_guard c(commit_mu_);
  write_checkpoint();
}

void ServerCore::maybe_checkpoint() {
  if (config_.checkpoint_every == 0) return;
  if (++commits_since_checkpoint_ >= config_.checkpoint_every) write_checkpoint();
}

// --- connections --------------------------------------------------------

ServerCore::ConnId ServerCore::attach(Sink sink) {
  auto conn = std::make_shared<Conn>();
  conn->box = std::make_shared<Outbox>();
  conn->box->sink = std::move(sink);
  std::lock_guard lock(meta_mu_);
  auto id = next_conn_++;
  conns_.emplace(id, std::move(conn));
  return id;
}

void ServerCore::detach(ConnId id) {
  Batch out;
  std::lock_guard lock(meta_mu_);
  auto it = conns_.find(id);
  if (it == conns_.end()) return;
  if (it->second->serving) {
    auto& list = serving_[it->second->user];
    std::erase(list, id);
    if (list.empty()) serving_.erase(it->second->user);
  }
  conns_.erase(it);
  for (auto& [eid, ex] : exchanges_) {
    if (ex->state.terminal()) continue;
    if (ex->uploader_conn == id || ex->holder_conn == id) {
      abort_exchange(*ex, ReasonCode::kPeerAborted, ReasonCode::kPeerAborted, out);
    }
  }
}

bool ServerCore::online(const std::string& user) const {
  auto it = serving_.find(user);
  return it != serving_.end() && !it->second.empty();
}

void ServerCore::reject(ConnId conn) {
  Batch out;
  std::lock_guard lock(meta_mu_);
  auto it = conns_.find(conn);
  if (it != conns_.end()) out.push(it->second->box, proto::Abort{ReasonCode::kMalformed, 0});
}

bool ServerCore::handle(ConnId conn, const Message& m) {
  Batch out;
  std::shared_ptr<Outbox> box;
  {
    std::lock_guard lock(meta_mu_);
    auto it = conns_.find(conn);
    if (it == conns_.end()) return false;
    box = it->second->box;
  }
  try {
    if (auto id = proto::exchange_of(m)) {
      if (auto* done = std::get_if<proto::ExchangeDone>(&m)) {
        on_exchange_done(conn, *done, out);
      } else if (std::holds_alternative<proto::ExchangeOpen>(m)) {
        out.push(box, proto::Abort{ReasonCode::kMalformed, *id});
        return false;
      } else {
        on_exchange_message(conn, *id, m, out);
      }
      return true;
    }
    switch (proto::type_of(m)) {
      case proto::MsgType::kGetParams:
        on_get_params(conn, out);
        return true;
      case proto::MsgType::kHello:
        on_hello(conn, std::get<proto::Hello>(m));
        return true;
      case proto::MsgType::kUploadHashes:
        on_upload_hashes(conn, std::get<proto::UploadHashes>(m), out);
        return true;
      case proto::MsgType::kUploadCt:
        on_upload_ct(conn, std::get<proto::UploadCt>(m), out);
        return true;
      case proto::MsgType::kFetchCt:
        on_fetch_ct(conn, std::get<proto::FetchCt>(m), out);
        return true;
      case proto::MsgType::kAbort:
        return true;  // nothing to abort outside an exchange
      default:
        out.push(box, proto::Abort{ReasonCode::kMalformed, 0});
        return false;
    }
  } catch (const Error& e) {
    if (e.code() == Errc::kIo || e.code() == Errc::kCorruptSnapshot) throw;
    out.push(box, proto::Abort{ReasonCode::kMalformed, proto::exchange_of(m).value_or(0)});
    return e.code() != Errc::kProtocol;
  }
}

// --- handlers -----------------------------------------------------------

void ServerCore::on_get_params(ConnId conn, Batch& out) {
  std::shared_ptr<const proto::Params> p;
  {
    std::shared_lock lock(index_mu_);
    p = params_;
  }
  std::lock_guard lock(meta_mu_);
  if (auto it = conns_.find(conn); it != conns_.end()) out.push(it->second->box, *p);
}

void ServerCore::on_hello(ConnId conn, const proto::Hello& m) {
  if (m.user_id.empty()) throw Error(Errc::kProtocol, "empty user id");
  std::lock_guard lock(meta_mu_);
  auto& c = *conns_.at(conn);
  if (c.serving && c.user != m.user_id) {
    std::erase(serving_[c.user], conn);
    c.serving = false;
  }
  c.user = m.user_id;
  if (m.serving && !c.serving) {
    serving_[m.user_id].push_back(conn);
    c.serving = true;
  }
}

void ServerCore::on_upload_hashes(ConnId conn, const proto::UploadHashes& m, Batch& out) {
  if (m.user_id.empty()) throw Error(Errc::kInvalidArgument, "empty user id");
  std::shared_ptr<Outbox> box;
  {
    std::lock_guard lock(meta_mu_);
    auto& c = *conns_.at(conn);
    box = c.box;
    if (!c.serving) c.user = m.user_id;
  }
  if (limiter_.check_rate(m.user_id) == RateDecision::kRateLimited) {
    std::lock_guard lock(meta_mu_);
    ++stats_.rate_limited;
    out.push(box, proto::Abort{ReasonCode::kRateLimited, 0});
    return;
  }

  std::vector<ShortlistEntry> shortlist;
  GenerationId newest = 0;
  std::shared_ptr<const proto::Params> params;
  bool missing = false;
  {
    std::shared_lock lock(index_mu_);
    for (const auto& [gen, set] : m.digests) {
      if (set.size() != static_cast<std::size_t>(index_config_.tables)) {
        throw Error(Errc::kWrongDigestCount, "digest count");
      }
    }
    try {
      shortlist = index_->query(m.digests);
    } catch (const Error& e) {
      if (e.code() != Errc::kMissingGeneration) throw;
      missing = true;
    }
    newest = index_->newest().generation_id;
    params = params_;
  }

  std::lock_guard lock(meta_mu_);
  if (missing) {
    // The client's parameters are stale; it recomputes and resends.
    out.push(box, *params);
    return;
  }

  auto eligible = [&](const std::string& u) { return u != m.user_id && online(u); };
  const ImageRecord* target = nullptr;
  std::size_t holder = 0;
  std::uint32_t collisions = 0;
  bool matched = false;
  for (const auto& e : shortlist) {
    if (e.collisions < config_.dedup.threshold) break;
    matched = true;
    auto it = images_.find(e.image_id);
    if (it == images_.end()) continue;
    if (auto h = select_counterpart(it->second, eligible)) {
      target = &it->second;
      holder = *h;
      collisions = static_cast<std::uint32_t>(e.collisions);
      break;
    }
  }
  if (!target && faults_.force_duplicate) {
    for (auto it = images_.rbegin(); it != images_.rend() && !target; ++it) {
      if (auto h = select_counterpart(it->second, eligible)) {
        target = &it->second;
        holder = *h;
      }
    }
  }

  if (target) {
    const auto& holder_user = target->access_holders[holder];
    auto ex = std::make_unique<Exchange>(Exchange{
        proto::ExchangeState(next_exchange_++, config_.phase_timeout, config_.now()),
        target->image_ref, m.user_id, holder_user, conn, serving_.at(holder_user).front()});
    auto id = ex->state.id();
    ++stats_.exchanges_opened;
    proto::ExchangeOpen open{id,
                             target->image_ref,
                             ExchangeRole::kUploader,
                             static_cast<std::uint32_t>(config_.pake_bits),
                             static_cast<std::uint32_t>(index_config_.dim),
                             static_cast<std::uint32_t>(index_config_.bits)};
    out.push(box, proto::DedupResult{
                      proto::DedupDuplicate{id, ExchangeRole::kHolder, collisions, target->image_ref}});
    out.push(box, open);
    open.role = ExchangeRole::kHolder;
    out.push(conns_.at(ex->holder_conn)->box, open);
    exchanges_.emplace(id, std::move(ex));
    return;
  }

  if (matched) ++stats_.holder_fallbacks;
  proto::UploadToken token = random_array<16>();
  auto ref = next_image_ref_++;
  pending_[token] = Pending{m.user_id, ref, newest, m.digests.at(newest),
                            config_.now() + config_.phase_timeout};
  out.push(box, proto::DedupResult{proto::DedupUnique{token, ref}});
}

void ServerCore::on_upload_ct(ConnId conn, const proto::UploadCt& m, Batch& out) {
  std::shared_ptr<Outbox> box;
  Pending p;
  {
    std::lock_guard lock(meta_mu_);
    box = conns_.at(conn)->box;
    auto it = pending_.find(m.upload_token);
    if (it == pending_.end() || it->second.user != conns_.at(conn)->user) {
      out.push(box, proto::Abort{ReasonCode::kBadToken, 0});
      return;
    }
    p = std::move(it->second);
    pending_.erase(it);  // single use, even if the commit fails below
    auto& used = quota_used_[p.user];
    if (used + m.ciphertext.size() > config_.quota_bytes) {
      out.push(box, proto::Abort{ReasonCode::kQuotaExceeded, 0});
      return;
    }
    used += m.ciphertext.size();  // reserved now so concurrent uploads cannot overshoot
  }
  auto release = [&] {
    std::lock_guard lock(meta_mu_);
    quota_used_[p.user] -= m.ciphertext.size();
  };

  Digest32 blob;
  try {
    blob = blobs_.put(m.ciphertext, config_.crash_hook);
  } catch (const Error&) {
    release();
    throw;
  }

  {
    std::lock_guard c(commit_mu_);
    if (wal_) {
      ByteWriter w;
      w.u64(p.image_ref);
      w.u32(p.generation);
      w.str(p.user);
      w.raw(blob);
      w.u64(m.ciphertext.size());
      w.u16(static_cast<std::uint16_t>(p.digests.size()));
      for (const auto& d : p.digests) w.raw(d.bytes());
      wal_->append(WalType::kImageCommitted, w.bytes(), config_.crash_hook);
    }
    bool full = false;
    {
      std::unique_lock ilock(index_mu_);
      std::lock_guard lock(meta_mu_);
      index_->insert_into(p.generation, p.image_ref, p.digests);
      images_.emplace(p.image_ref, ImageRecord{p.image_ref, blob, m.ciphertext.size(),
                                               p.generation, {p.user}, {0}});
      ++stats_.uploads_committed;
      full = p.generation == index_->newest().generation_id &&
             index_->newest().entry_count() >= config_.dedup.rollover_capacity;
    }
    hook("indexed");
    if (full) open_next_generation();
    maybe_checkpoint();
  }
  std::lock_guard lock(meta_mu_);
  out.push(box, proto::Ack{p.image_ref});
}

void ServerCore::on_fetch_ct(ConnId conn, const proto::FetchCt& m, Batch& out) {
  std::shared_ptr<Outbox> box;
  Digest32 blob{};
  {
    std::lock_guard lock(meta_mu_);
    const auto& c = *conns_.at(conn);
    box = c.box;
    auto it = images_.find(m.image_ref);
    bool allowed = false;
    if (it != images_.end()) {
      const auto& holders = it->second.access_holders;
      allowed = !c.user.empty() && std::find(holders.begin(), holders.end(), c.user) != holders.end();
      for (const auto& [id, ex] : exchanges_) {
        if (allowed) break;
        allowed = ex->uploader_conn == conn && ex->image == m.image_ref && ex->fetch_granted &&
                  ex->state.phase() != Phase::kAborted;
      }
      blob = it->second.blob;
    }
    if (!allowed) {
      out.push(box, proto::Abort{ReasonCode::kBadToken, 0});
      return;
    }
  }
  auto data = blobs_.get(blob);
  if (!data) {
    out.push(box, proto::Abort{ReasonCode::kBadToken, 0});
    return;
  }
  if (faults_.corrupt_ciphertext && !data->empty()) (*data)[data->size() / 2] ^= 0x01;
  out.push(box, proto::Ct{std::move(*data)});
}

void ServerCore::abort_exchange(Exchange& ex, ReasonCode to_uploader, ReasonCode to_holder,
                                Batch& out) {
  if (ex.state.terminal()) return;
  ex.state.abort(to_uploader);
  ++stats_.exchanges_aborted;
  auto id = ex.state.id();
  if (auto it = conns_.find(ex.uploader_conn); it != conns_.end()) {
    out.push(it->second->box, proto::Abort{to_uploader, id});
  }
  if (auto it = conns_.find(ex.holder_conn); it != conns_.end()) {
    out.push(it->second->box, proto::Abort{to_holder, id});
  }
}

void ServerCore::on_exchange_message(ConnId conn, proto::ExchangeId id, const Message& m,
                                     Batch& out) {
  std::lock_guard lock(meta_mu_);
  auto sender = conns_.at(conn)->box;
  auto it = exchanges_.find(id);
  if (it == exchanges_.end()) {
    if (!std::holds_alternative<proto::Abort>(m)) out.push(sender, proto::Abort{ReasonCode::kBadToken, id});
    return;
  }
  auto& ex = *it->second;
  int role;
  if (conn == ex.uploader_conn) {
    role = 0;
  } else if (conn == ex.holder_conn) {
    role = 1;
  } else {
    out.push(sender, proto::Abort{ReasonCode::kBadToken, id});
    return;
  }
  if (ex.state.terminal()) return;  // late traffic after an abort
  auto peer_it = conns_.find(role == 0 ? ex.holder_conn : ex.uploader_conn);
  std::shared_ptr<Outbox> peer = peer_it == conns_.end() ? nullptr : peer_it->second->box;
  const auto now = config_.now();

  if (auto* a = std::get_if<proto::Abort>(&m)) {
    if (a->reason == ReasonCode::kAuthFailure) ++stats_.auth_failures;
    ex.state.abort(a->reason);
    ++stats_.exchanges_aborted;
    out.push(peer, proto::Abort{ReasonCode::kPeerAborted, id});
    return;
  }

  bool ok = false;
  if (auto* s = std::get_if<proto::SlshParamShare>(&m)) {
    ok = ex.state.phase() == Phase::kOpened && static_cast<int>(s->sender_role) == role &&
         !ex.shared[role];
    if (ok) {
      ex.shared[role] = true;
      out.push(peer, m);
      if (ex.shared[0] && ex.shared[1]) ex.state.advance(Phase::kParamsShared, now);
    }
  } else if (auto* p = std::get_if<proto::PakeMsg>(&m)) {
    int s = p->session_index - 1;
    Phase need = s == 0 ? Phase::kParamsShared : Phase::kPake1;
    ok = ex.state.phase() == need && !ex.pake[s][role];
    if (ok) {
      // Relayed untouched; the server never interprets the element.
      ex.pake[s][role] = true;
      out.push(peer, m);
      if (ex.pake[s][0] && ex.pake[s][1]) {
        ex.state.advance(s == 0 ? Phase::kPake1 : Phase::kPake2, now);
      }
    }
  } else if (std::holds_alternative<proto::WrappedKeyMsg>(m)) {
    ok = role == 1 && ex.state.phase() == Phase::kPake2;
    if (ok) {
      out.push(peer, m);
      ex.state.advance(Phase::kKeyWrapped, now);
      ex.fetch_granted = true;
    }
  }
  if (!ok) abort_exchange(ex, ReasonCode::kMalformed, ReasonCode::kMalformed, out);
}

void ServerCore::on_exchange_done(ConnId conn, const proto::ExchangeDone& m, Batch& out) {
  std::lock_guard c(commit_mu_);
  std::lock_guard lock(meta_mu_);
  auto sender = conns_.at(conn)->box;
  auto it = exchanges_.find(m.exchange_id);
  if (it == exchanges_.end()) {
    out.push(sender, proto::Abort{ReasonCode::kBadToken, m.exchange_id});
    return;
  }
  auto& ex = *it->second;
  if (conn != ex.uploader_conn || ex.state.phase() != Phase::kKeyWrapped) {
    if (conn == ex.uploader_conn || conn == ex.holder_conn) {
      abort_exchange(ex, ReasonCode::kMalformed, ReasonCode::kMalformed, out);
    } else {
      out.push(sender, proto::Abort{ReasonCode::kBadToken, m.exchange_id});
    }
    return;
  }
  auto& image = images_.at(ex.image);
  if (wal_) {
    ByteWriter w;
    w.u64(ex.image);
    w.str(ex.holder);
    w.str(ex.uploader);
    wal_->append(WalType::kExchangeCompleted, w.bytes(), config_.crash_hook);
  }
  complete_exchange(image, ex.holder, ex.uploader);
  ex.state.advance(Phase::kDone, config_.now());
  ++stats_.exchanges_completed;
  out.push(sender, proto::Ack{ex.image});
}

void ServerCore::tick() {
  Batch out;
  std::lock_guard lock(meta_mu_);
  const auto now = config_.now();
  for (auto it = exchanges_.begin(); it != exchanges_.end();) {
    auto& ex = *it->second;
    if (ex.state.expired(now)) abort_exchange(ex, ReasonCode::kTimeout, ReasonCode::kTimeout, out);
    if (ex.state.terminal()) {
      it = exchanges_.erase(it);
    } else {
      ++it;
    }
  }
  std::erase_if(pending_, [&](const auto& kv) { return kv.second.expires <= now; });
}

// --- introspection ------------------------------------------------------

ServerStats ServerCore::stats() const {
  std::lock_guard lock(meta_mu_);
  return stats_;
}

proto::Params ServerCore::params() const {
  std::shared_lock lock(index_mu_);
  return *params_;
}

std::size_t ServerCore::image_count() const {
  std::lock_guard lock(meta_mu_);
  return images_.size();
}

bool ServerCore::indexed(ImageId ref) const {
  std::shared_lock lock(index_mu_);
  return index_->contains(ref);
}

std::optional<ImageRecord> ServerCore::image(ImageId ref) const {
  std::lock_guard lock(meta_mu_);
  auto it = images_.find(ref);
  if (it == images_.end()) return std::nullopt;
  return it->second;
}

std::vector<ImageId> ServerCore::image_refs() const {
  std::lock_guard lock(meta_mu_);
  std::vector<ImageId> out;
  for (const auto& [ref, _] : images_) out.push_back(ref);
  return out;
}

std::optional<Bytes> ServerCore::ciphertext(ImageId ref) const {
  auto img = image(ref);
  if (!img) return std::nullopt;
  return blobs_.get(img->blob);
}

std::uint64_t ServerCore::quota_used(const std::string& user) const {
  std::lock_guard lock(meta_mu_);
  auto it = quota_used_.find(user);
  return it == quota_used_.end() ? 0 : it->second;
}

std::size_t ServerCore::pending_uploads() const {
  std::lock_guard lock(meta_mu_);
  return pending_.size();
}

std::size_t ServerCore::live_exchanges() const {
  std::lock_guard lock(meta_mu_);
  return static_cast<std::size_t>(std::count_if(
      exchanges_.begin(), exchanges_.end(), [](const auto& kv) { return !kv.second->state.terminal(); }));
}

Digest32 ServerCore::state_digest() const {
  std::shared_lock ilock(index_mu_);
  std::lock_guard lock(meta_mu_);
  Sha256 h;
  h.update(index_->state_digest());
  ByteWriter w;
  for (const auto& [ref, img] : images_) put_image(w, img);
  h.update(w.bytes());
  return h.finish();
}

}  // namespace sdedup::server
