#pragma once

#include <cstdint>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <string>

#include "diffsolve/denoiser.hpp"

namespace diffsolve {

// Memoizes an encoder by scene content. Keys are the canonical scene bytes
// (the 64-bit content hash only picks the bucket), so a hit is always
// bitwise-equal to a fresh encode.
//
// Thread-safe. Concurrent first requests for one key run the encoder once;
// the other callers block on the in-flight result.
class EncoderCache {
 public:
  struct Options {
    bool enabled = true;
    std::size_t capacity = 1;  // entries kept, least recently used evicted
  };

  struct Lookup {
    ContextEmbedding embedding;
    bool hit;
  };

  explicit EncoderCache(std::shared_ptr<const EncoderModel> encoder);
  EncoderCache(std::shared_ptr<const EncoderModel> encoder, Options options);

  Lookup cached_encode(const SceneContext& ctx);

  // Monotone count of underlying encoder invocations.
  std::uint64_t encoder_calls() const;
  std::uint64_t hits() const;
  void clear();
  const Options& options() const { return options_; }
  const EncoderModel& encoder() const { return *encoder_; }

 private:
  struct Entry {
    std::uint64_t id;
    std::uint64_t hash;
    std::string key;
    std::shared_future<ContextEmbedding> value;
  };

  std::shared_ptr<const EncoderModel> encoder_;
  Options options_;
  mutable std::mutex mutex_;
  std::list<Entry> entries_;  // most recent first
  std::uint64_t calls_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t next_id_ = 0;
};

}  // namespace diffsolve
