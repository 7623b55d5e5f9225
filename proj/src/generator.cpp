#include "synthmr/generator.hpp"

#include <algorithm>

#include "json.hpp"
#include "synthmr/rng.hpp"

namespace synthmr {

using nlohmann::json;

namespace {

json volume_to_json(const Volume& v) {
  return {{"dims", {v.dims().nx, v.dims().ny, v.dims().nz}},
          {"data", std::vector<float>(v.data().begin(), v.data().end())}};
}

Volume volume_from_json(const json& j) {
  const Dims d{j.at("dims").at(0).get<int>(), j.at("dims").at(1).get<int>(), j.at("dims").at(2).get<int>()};
  return Volume(d, j.at("data").get<std::vector<float>>());
}

Dims crop_offset(Dims from, Dims to) {
  if (to.nx > from.nx || to.ny > from.ny || to.nz > from.nz)
    throw DataError("crop dims " + to_string(to) + " exceed volume dims " + to_string(from));
  return {(from.nx - to.nx) / 2, (from.ny - to.ny) / 2, (from.nz - to.nz) / 2};
}

Volume crop(const Volume& v, Dims to) {
  const Dims o = crop_offset(v.dims(), to);
  Volume out(to, 0.f, v.spacing());
  for (int z = 0; z < to.nz; ++z)
    for (int y = 0; y < to.ny; ++y)
      for (int x = 0; x < to.nx; ++x) out.at(x, y, z) = v.at(x + o.nx, y + o.ny, z + o.nz);
  return out;
}

LabelMap crop(const LabelMap& v, Dims to) {
  const Dims o = crop_offset(v.dims(), to);
  LabelMap out(to, 0, v.spacing());
  for (int z = 0; z < to.nz; ++z)
    for (int y = 0; y < to.ny; ++y)
      for (int x = 0; x < to.nx; ++x) out.at(x, y, z) = v.at(x + o.nx, y + o.ny, z + o.nz);
  return out;
}

}  // namespace

std::string record_to_json(const ParameterRecord& r) {
  json j;
  j["sample_index"] = r.sample_index;
  j["sample_seed"] = r.sample_seed;
  j["map_index"] = r.map_index;
  j["affine"] = {{"rotations_deg", r.affine.rotations_deg},
                 {"scalings", r.affine.scalings},
                 {"shears", r.affine.shears},
                 {"translations", r.affine.translations}};
  j["svf_grid"] = json::array();
  for (const auto& c : r.svf_grid.comp) j["svf_grid"].push_back(volume_to_json(c));
  j["stripped"] = r.stripped;
  j["contrast"] = r.contrast;
  json g = json::array();
  for (const auto& [label, p] : r.gmm) g.push_back({{"label", label}, {"mean", p.mean}, {"stddev", p.stddev}});
  j["gmm"] = g;
  j["bias_grid"] = volume_to_json(r.bias_grid);
  j["gamma"] = r.gamma;
  return j.dump();
}

ParameterRecord record_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ParameterRecord r;
    r.sample_index = j.at("sample_index").get<std::uint64_t>();
    r.sample_seed = j.at("sample_seed").get<std::uint64_t>();
    r.map_index = j.at("map_index").get<std::size_t>();
    const auto& a = j.at("affine");
    r.affine.rotations_deg = a.at("rotations_deg").get<std::array<double, 3>>();
    r.affine.scalings = a.at("scalings").get<std::array<double, 3>>();
    r.affine.shears = a.at("shears").get<std::array<double, 3>>();
    r.affine.translations = a.at("translations").get<std::array<double, 3>>();
    const auto& s = j.at("svf_grid");
    if (!s.is_array() || s.size() != 3) throw DataError("svf_grid must hold three components");
    for (int c = 0; c < 3; ++c) r.svf_grid.comp[c] = volume_from_json(s[c]);
    r.stripped = j.at("stripped").get<bool>();
    r.contrast = j.at("contrast").get<std::string>();
    for (const auto& e : j.at("gmm"))
      r.gmm[e.at("label").get<Label>()] = {e.at("mean").get<double>(), e.at("stddev").get<double>()};
    r.bias_grid = volume_from_json(j.at("bias_grid"));
    r.gamma = j.at("gamma").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed parameter record: ") + e.what());
  } catch (const ParameterError& e) {
    throw DataError(std::string("malformed parameter record: ") + e.what());
  }
}

PairGenerator::PairGenerator(std::vector<LabelMap> maps, GenConfig cfg) : maps_(std::move(maps)), cfg_(std::move(cfg)) {
  if (maps_.empty()) throw ParameterError("at least one label map is required");
  validate(cfg_);
  std::vector<bool> seen(65536, false);
  seen[0] = true;
  for (const auto& m : maps_) {
    if (m.dims().nx < 2 || m.dims().ny < 2 || m.dims().nz < 2)
      throw DataError("label maps need at least 2 voxels per axis, got " + to_string(m.dims()));
    if (cfg_.crop && (cfg_.crop->nx > m.dims().nx || cfg_.crop->ny > m.dims().ny || cfg_.crop->nz > m.dims().nz))
      throw ConfigError(ConfigError::Kind::invariant,
                        "crop dims " + to_string(*cfg_.crop) + " exceed label map dims " + to_string(m.dims()));
    for (Label l : m.data()) seen[l] = true;
  }
  for (std::size_t l = 0; l < seen.size(); ++l)
    if (seen[l]) universe_.push_back(static_cast<Label>(l));

  if (cfg_.mode == IntensityMode::rule)
    for (const auto& c : cfg_.contrasts)
      for (Label l : universe_)
        if (!c.labels.contains(l))
          throw ConfigError(ConfigError::Kind::invariant,
                            "contrast '" + c.name + "' has no hyperprior for label " + std::to_string(l));
}

ParameterRecord PairGenerator::sample_parameters(std::uint64_t index) const {
  ParameterRecord r;
  r.sample_index = index;
  r.sample_seed = sample_seed(cfg_.seed, index);

  Rng pick = stage_rng(r.sample_seed, Stage::map_choice);
  r.map_index = std::uniform_int_distribution<std::size_t>(0, maps_.size() - 1)(pick);

  Rng aff = stage_rng(r.sample_seed, Stage::affine);
  r.affine = sample_affine(cfg_, aff);

  Rng svf = stage_rng(r.sample_seed, Stage::svf);
  r.svf_grid = sample_svf_grid(cfg_, svf);

  Rng strip = stage_rng(r.sample_seed, Stage::strip);
  r.stripped = std::uniform_real_distribution<double>(0.0, 1.0)(strip) < cfg_.p_strip;

  Rng gmm = stage_rng(r.sample_seed, Stage::gmm_params);
  if (cfg_.mode == IntensityMode::rule) {
    auto [name, params] = sample_gmm_params_rule(cfg_.contrasts, gmm);
    r.contrast = std::move(name);
    r.gmm = std::move(params);
  } else {
    r.gmm = sample_gmm_params(universe_, cfg_, gmm);
  }

  Rng bias = stage_rng(r.sample_seed, Stage::bias);
  r.bias_grid = sample_bias_grid(cfg_, bias);

  Rng gamma = stage_rng(r.sample_seed, Stage::gamma);
  r.gamma = uniform(gamma, cfg_.gamma.lo, cfg_.gamma.hi);
  return r;
}

TrainingPair PairGenerator::render(const ParameterRecord& r) const {
  if (r.map_index >= maps_.size())
    throw DataError("record map index " + std::to_string(r.map_index) + " out of range");
  const LabelMap& src = maps_[r.map_index];
  const Dims d = src.dims();

  const DeformField phi = compose(affine_matrix(r.affine, d), integrate_svf(upscale_trilinear(r.svf_grid, d)));
  LabelMap target = warp_labels(src, phi);
  if (r.stripped) target = strip_labels(target, cfg_.extracerebral);

  Rng noise = stage_rng(r.sample_seed, Stage::gmm_noise);
  Volume g = sample_gmm_image(target, r.gmm, noise);
  g = gaussian_blur(g, cfg_.sigma_blur);
  g = apply_bias(g, bias_from_grid(r.bias_grid, d));

  if (cfg_.crop) {
    g = crop(g, *cfg_.crop);
    target = crop(target, *cfg_.crop);
  }
  return {gamma_normalize(g, r.gamma), std::move(target), r};
}

TrainingPair PairGenerator::generate(std::uint64_t index) const { return render(sample_parameters(index)); }

TrainingPair generate_pair(const std::vector<LabelMap>& maps, const GenConfig& cfg, std::uint64_t index) {
  return PairGenerator(maps, cfg).generate(index);
}

const ParameterRecord& record_parameters(const TrainingPair& pair) { return pair.record; }

// ---------------------------------------------------------------------------

PairStream::PairStream(std::shared_ptr<const PairGenerator> gen, std::optional<std::uint64_t> count, unsigned workers,
                       std::uint64_t first)
    : gen_(std::move(gen)),
      end_(count ? std::optional<std::uint64_t>(first + *count) : std::nullopt),
      next_out_(first),
      next_claim_(first),
      window_(2 * static_cast<std::size_t>(workers)) {
  for (unsigned w = 0; w < workers; ++w) workers_.emplace_back([this] { work(); });
}

PairStream::~PairStream() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  workers_.clear();
}

bool PairStream::exhausted(std::uint64_t index) const { return end_ && index >= *end_; }

void PairStream::work() {
  for (;;) {
    std::uint64_t index = 0;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || exhausted(next_claim_) || next_claim_ < next_out_ + window_; });
      if (stop_ || exhausted(next_claim_)) return;
      index = next_claim_++;
    }
    try {
      TrainingPair p = gen_->generate(index);
      std::lock_guard lock(mu_);
      ready_.emplace(index, std::move(p));
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = std::current_exception();
      stop_ = true;
    }
    cv_.notify_all();
  }
}

std::optional<TrainingPair> PairStream::next() {
  if (exhausted(next_out_)) return std::nullopt;
  if (workers_.empty()) return gen_->generate(next_out_++);

  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return error_ || ready_.contains(next_out_); });
  if (auto it = ready_.find(next_out_); it != ready_.end()) {
    TrainingPair p = std::move(it->second);
    ready_.erase(it);
    ++next_out_;
    lock.unlock();
    cv_.notify_all();
    return p;
  }
  std::rethrow_exception(error_);
}

PairStream generate_stream(const std::vector<LabelMap>& maps, const GenConfig& cfg,
                           std::optional<std::uint64_t> count, unsigned workers) {
  return PairStream(std::make_shared<const PairGenerator>(maps, cfg), count, workers);
}

}  // namespace synthmr
