#pragma once

// End-to-end training-pair synthesis. A pair is a pure function of
// (label maps, config, sample index): every random draw comes from streams
// derived from (config.seed, index), so pairs can be produced in any order and
// on any number of threads.

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "synthmr/deform.hpp"
#include "synthmr/gen_config.hpp"
#include "synthmr/intensity.hpp"
#include "synthmr/volume.hpp"

namespace synthmr {

// Everything drawn for one sample. Rendering a record through the
// deterministic pipeline reproduces the pair bit for bit.
struct ParameterRecord {
  std::uint64_t sample_index = 0;
  std::uint64_t sample_seed = 0;
  std::size_t map_index = 0;
  AffineParams affine;
  VectorField svf_grid;  // c_v^3 coarse velocities
  bool stripped = false;
  std::string contrast;  // rule mode only
  GmmParams gmm;
  Volume bias_grid;  // c_B^3 log-domain coefficients
  double gamma = 0;
};

std::string record_to_json(const ParameterRecord& r);
ParameterRecord record_from_json(const std::string& text);

struct TrainingPair {
  Volume image;     // in [0, 1]
  LabelMap target;  // aligned with image
  ParameterRecord record;
};

class PairGenerator {
 public:
  // Throws ParameterError on an empty map list, ConfigError when the config
  // is invalid or a rule-mode contrast misses a label of the maps.
  PairGenerator(std::vector<LabelMap> maps, GenConfig cfg);

  TrainingPair generate(std::uint64_t sample_index) const;

  // Draws only the parameters of a sample.
  ParameterRecord sample_parameters(std::uint64_t sample_index) const;

  // Runs the deterministic pipeline for a recorded parameter set.
  TrainingPair render(const ParameterRecord& record) const;

  const GenConfig& config() const { return cfg_; }
  const std::vector<LabelMap>& maps() const { return maps_; }
  // Sorted union of the maps' labels plus background.
  const std::vector<Label>& label_universe() const { return universe_; }

 private:
  std::vector<LabelMap> maps_;
  GenConfig cfg_;
  std::vector<Label> universe_;
};

TrainingPair generate_pair(const std::vector<LabelMap>& maps, const GenConfig& cfg, std::uint64_t sample_index);

const ParameterRecord& record_parameters(const TrainingPair& pair);

// Lazily yields generate(first), generate(first + 1), ... in index order.
// With workers > 0 samples are produced by a thread pool that runs at most
// 2 * workers samples ahead of the consumer; workers == 0 generates inline.
class PairStream {
 public:
  PairStream(std::shared_ptr<const PairGenerator> gen, std::optional<std::uint64_t> count, unsigned workers = 0,
             std::uint64_t first = 0);
  ~PairStream();
  PairStream(const PairStream&) = delete;
  PairStream& operator=(const PairStream&) = delete;

  std::optional<TrainingPair> next();

 private:
  void work();
  bool exhausted(std::uint64_t index) const;

  std::shared_ptr<const PairGenerator> gen_;
  std::optional<std::uint64_t> end_;
  std::uint64_t next_out_;
  std::uint64_t next_claim_;
  std::size_t window_;
  bool stop_ = false;
  std::exception_ptr error_;
  std::map<std::uint64_t, TrainingPair> ready_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::jthread> workers_;
};

PairStream generate_stream(const std::vector<LabelMap>& maps, const GenConfig& cfg,
                           std::optional<std::uint64_t> count, unsigned workers = 0);

}  // namespace synthmr
