#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include "synthmr/bayes.hpp"
#include "synthmr/gen_config.hpp"
#include "synthmr/generator.hpp"
#include "synthmr/metrics.hpp"
#include "synthmr/nifti.hpp"
#include "synthmr/phantom.hpp"
#include "synthmr/stream.hpp"

namespace synthmr::cli {

namespace fs = std::filesystem;

namespace {

bool is_nifti(const fs::path& p) {
  const std::string s = p.filename().string();
  auto ends = [&](std::string_view suf) { return s.size() >= suf.size() && s.ends_with(suf); };
  return ends(".nii") || ends(".nii.gz");
}

std::vector<fs::path> expand_maps(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      std::vector<fs::path> in_dir;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && is_nifti(e.path())) in_dir.push_back(e.path());
      std::sort(in_dir.begin(), in_dir.end());
      out.insert(out.end(), in_dir.begin(), in_dir.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw DataError("no such label map: " + a);
    }
  }
  if (out.empty()) throw DataError("no label maps found");
  return out;
}

std::vector<LabelMap> load_maps(const std::vector<std::string>& args) {
  std::vector<LabelMap> maps;
  for (const auto& p : expand_maps(args)) maps.push_back(read_labels(p));
  return maps;
}

GenConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed) {
  GenConfig cfg;
  if (!path.empty()) {
    cfg = load_config(path);
  } else if (const char* env = std::getenv("SYNTHMR_CONFIG"); env && *env) {
    cfg = load_config(env);
  }
  if (seed) cfg.seed = *seed;
  return cfg;
}

std::string stem(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(index));
  return buf;
}

std::pair<std::string, std::uint16_t> split_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "" : addr.substr(0, colon);
  const std::string port = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  try {
    const unsigned long v = std::stoul(port);
    if (v > 65535) throw std::out_of_range("port");
    return {host, static_cast<std::uint16_t>(v)};
  } catch (const std::exception&) {
    throw ParameterError("invalid listen address '" + addr + "', expected [host:]port");
  }
}

std::vector<std::pair<Label, Label>> parse_pairs(const std::vector<std::string>& items) {
  std::vector<std::pair<Label, Label>> out;
  for (const auto& s : items) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ParameterError("label pair '" + s + "' must look like left:right");
    try {
      out.emplace_back(static_cast<Label>(std::stoul(s.substr(0, colon))),
                       static_cast<Label>(std::stoul(s.substr(colon + 1))));
    } catch (const std::exception&) {
      throw ParameterError("bad label pair '" + s + "'");
    }
  }
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic MRI training pairs and atlas-based Bayesian segmentation"};
  app.require_subcommand(1);

  std::vector<std::string> maps;
  std::string config, out_path;
  std::optional<std::uint64_t> seed, count;
  unsigned workers = 0;

  auto* gen = app.add_subcommand("generate", "write image/target NIfTI pairs and parameter records");
  gen->add_option("--maps", maps, "label map files or directories")->required();
  gen->add_option("--config", config, "JSON generator config (default: $SYNTHMR_CONFIG or built-in)");
  gen->add_option("--count", count, "number of pairs")->required();
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--seed", seed, "master seed (overrides the config)");
  gen->add_option("--workers", workers, "generator threads (0 = inline)");
  bool gzip = false;
  gen->add_flag("--gzip", gzip, "write .nii.gz");

  std::string listen;
  bool to_stdout = false;
  auto* str = app.add_subcommand("stream", "emit binary pair records");
  str->add_option("--maps", maps, "label map files or directories")->required();
  str->add_option("--config", config, "JSON generator config");
  str->add_option("--count", count, "number of records (default: unbounded)");
  str->add_option("--seed", seed, "master seed (overrides the config)");
  str->add_option("--workers", workers, "generator threads (0 = inline)");
  auto* listen_opt = str->add_option("--listen", listen, "[host:]port to serve one consumer at a time");
  auto* stdout_opt = str->add_flag("--stdout", to_stdout, "write records to standard output");
  listen_opt->excludes(stdout_opt);
  stdout_opt->excludes(listen_opt);

  double sigma = 0;
  auto* atl = app.add_subcommand("make-atlas", "build a probabilistic atlas from label maps");
  atl->add_option("--maps", maps, "label map files or directories")->required();
  atl->add_option("--sigma", sigma, "smoothing in voxels")->check(CLI::NonNegativeNumber);
  atl->add_option("--out", out_path, "output 4D NIfTI")->required();

  std::string image, atlas_path, bias = "off";
  EmOptions em;
  auto* seg = app.add_subcommand("segment", "EM segmentation with an atlas prior");
  seg->add_option("--image", image, "input image")->required();
  seg->add_option("--atlas", atlas_path, "atlas from make-atlas")->required();
  seg->add_option("--bias", bias, "bias field correction")->check(CLI::IsMember({"on", "off"}));
  seg->add_option("--bias-order", em.bias_order, "polynomial degree")->check(CLI::Range(0, 4));
  seg->add_option("--max-iter", em.max_iter, "EM iterations")->check(CLI::PositiveNumber);
  seg->add_option("--tol", em.tol, "relative log-likelihood tolerance")->check(CLI::NonNegativeNumber);
  seg->add_option("--out", out_path, "output label map")->required();

  std::string pred, truth;
  std::vector<Label> labels;
  std::vector<std::string> pairs;
  auto* ev = app.add_subcommand("evaluate", "Dice scores as CSV");
  ev->add_option("--pred", pred, "predicted label map")->required();
  ev->add_option("--truth", truth, "reference label map")->required();
  ev->add_option("--labels", labels, "comma separated label subset")->delimiter(',');
  ev->add_option("--pairs", pairs, "contralateral pairs left:right, comma separated")->delimiter(',');
  ev->add_option("--out", out_path, "output CSV")->required();

  std::vector<int> dims{64, 64, 64};
  bool simple = false;
  std::uint64_t first_seed = 0;
  std::uint64_t n_phantoms = 1;
  auto* ph = app.add_subcommand("phantom", "write procedural head label maps");
  ph->add_option("--dims", dims, "nx,ny,nz")->delimiter(',')->expected(3)->check(CLI::PositiveNumber);
  ph->add_option("--seed", first_seed, "seed of the first map");
  ph->add_option("--count", n_phantoms, "number of maps");
  ph->add_flag("--simple", simple, "four labels only");
  ph->add_option("--out", out_path, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      if (*count == 0) return 0;
      auto g = std::make_shared<const PairGenerator>(load_maps(maps), resolve_config(config, seed));
      fs::create_directories(out_path);
      const std::string ext = gzip ? ".nii.gz" : ".nii";
      PairStream s(g, count, workers);
      while (auto p = s.next()) {
        const fs::path base = fs::path(out_path) / stem(p->record.sample_index);
        write_volume(p->image, base.string() + "_image" + ext);
        write_volume(p->target, base.string() + "_target" + ext);
        std::ofstream js(base.string() + "_params.json");
        js << record_to_json(p->record) << '\n';
        if (!js) throw DataError("cannot write " + base.string() + "_params.json");
      }
      err << "wrote " << *count << " pairs to " << out_path << '\n';
    } else if (*str) {
      if (listen.empty() && !to_stdout) throw CLI::RequiredError("--listen or --stdout");
      auto g = std::make_shared<const PairGenerator>(load_maps(maps), resolve_config(config, seed));
      PairStream s(g, count, workers);
      if (to_stdout) {
        while (auto p = s.next()) write_record(out, *p);
        out.flush();
      } else {
        const auto [host, port] = split_address(listen);
        StreamServer server(host, port);
        err << "listening on " << (host.empty() ? "*" : host) << ':' << server.port() << std::endl;
        const auto sent = server.serve(s);
        err << "sent " << sent << " records\n";
      }
    } else if (*atl) {
      const auto m = load_maps(maps);
      write_atlas(build_atlas(m, sigma), out_path);
    } else if (*seg) {
      const Volume img = read_image(image);
      const Atlas a = read_atlas(atlas_path);
      em.bias = bias == "on";
      const EmResult r = em_segment(img, a, em);
      write_volume(r.map_labels, out_path);
      err << "EM: " << r.ll_trace.size() << " iterations, " << (r.converged ? "converged" : "not converged")
          << ", log-likelihood " << r.ll_trace.back() << '\n';
    } else if (*ev) {
      const LabelMap p = read_labels(pred), t = read_labels(truth);
      const DiceReport r = dice_report(p, t, labels, parse_pairs(pairs));
      write_dice_csv(r, out_path);
      err << "mean Dice " << r.mean << '\n';
    } else if (*ph) {
      fs::create_directories(out_path);
      PhantomOptions opts;
      opts.simple = simple;
      for (std::uint64_t i = 0; i < n_phantoms; ++i)
        write_volume(make_phantom({dims[0], dims[1], dims[2]}, first_seed + i, opts),
                     fs::path(out_path) / ("phantom_" + stem(first_seed + i) + ".nii.gz"));
    }
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 1;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace synthmr::cli
