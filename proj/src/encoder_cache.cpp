#include "diffsolve/encoder_cache.hpp"

#include <stdexcept>

#include "diffsolve/rng.hpp"

namespace diffsolve {

EncoderCache::EncoderCache(std::shared_ptr<const EncoderModel> encoder) : EncoderCache(std::move(encoder), Options{}) {}

EncoderCache::EncoderCache(std::shared_ptr<const EncoderModel> encoder, Options options)
    : encoder_(std::move(encoder)), options_(options) {
  if (!encoder_) throw std::invalid_argument("EncoderCache: null encoder");
  if (options_.capacity == 0) throw std::invalid_argument("EncoderCache: capacity must be >= 1");
}

EncoderCache::Lookup EncoderCache::cached_encode(const SceneContext& ctx) {
  if (!options_.enabled) {
    {
      std::lock_guard lock(mutex_);
      ++calls_;
    }
    return {encoder_->encode(ctx), false};
  }

  std::string key = ctx.canonical_bytes();
  Fnv1a h;
  h.update(key.data(), key.size());
  const std::uint64_t hash = h.digest();

  std::promise<ContextEmbedding> promise;
  std::shared_future<ContextEmbedding> pending;
  std::uint64_t id = 0;
  {
    std::unique_lock lock(mutex_);
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      if (it->hash == hash && it->key == key) {
        entries_.splice(entries_.begin(), entries_, it);
        ++hits_;
        auto value = it->value;
        lock.unlock();
        return {value.get(), true};
      }
    }
    pending = promise.get_future().share();
    id = ++next_id_;
    entries_.push_front({id, hash, std::move(key), pending});
    while (entries_.size() > options_.capacity) entries_.pop_back();
    ++calls_;
  }

  try {
    promise.set_value(encoder_->encode(ctx));
  } catch (...) {
    // Waiters see the same exception; drop the poisoned entry so a retry re-encodes.
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    entries_.remove_if([id](const Entry& e) { return e.id == id; });
    throw;
  }
  return {pending.get(), false};
}

std::uint64_t EncoderCache::encoder_calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::uint64_t EncoderCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

void EncoderCache::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
}

}  // namespace diffsolve
