// fcgs command-line tool.
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <thread>

#include "fcgs/pipeline.hpp"

namespace {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fcgs::Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return fcgs::Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const fcgs::Bytes& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("cannot write " + path);
}

int exit_code(fcgs::ErrorKind kind) {
  using fcgs::ErrorKind;
  switch (kind) {
    case ErrorKind::Format:
    case ErrorKind::Schema:
    case ErrorKind::Truncation: return 2;
    case ErrorKind::Weights:
    case ErrorKind::Fingerprint: return 3;
    case ErrorKind::Corruption: return 4;
    default: return 1;
  }
}

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

void print_times(const fcgs::PhaseTimes& t) {
  std::fprintf(stderr, "time: positions %.3fs, masks %.3fs, hyper %.3fs, latents %.3fs, total %.3fs\n", t.positions,
               t.masks, t.hyper, t.latents, t.total);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feed-forward compression of 3D Gaussian splatting scenes"};
  app.require_subcommand(1);

  std::string in_path, out_path, weights_path;
  std::uint64_t seed = 0;
  std::size_t chunk_size = fcgs::kDefaultChunkSize;
  unsigned workers = default_workers();
  bool json = false, compact = false;

  auto* enc = app.add_subcommand("encode", "Compress a PLY scene");
  enc->add_option("input", in_path, "Input PLY")->required();
  enc->add_option("output", out_path, "Output .fcgs file")->required();
  enc->add_option("--weights", weights_path, "Model weights")->required();
  enc->add_option("--seed", seed, "Batch split seed");
  enc->add_option("--chunk-size", chunk_size, "Gaussians per chunk")->check(CLI::PositiveNumber);
  enc->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* dec = app.add_subcommand("decode", "Decompress to PLY");
  dec->add_option("input", in_path, "Input .fcgs file")->required();
  dec->add_option("output", out_path, "Output PLY")->required();
  dec->add_option("--weights", weights_path, "Model weights")->required();
  dec->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* ins = app.add_subcommand("inspect", "Report section sizes of a compressed file");
  ins->add_option("input", in_path, "Input .fcgs file")->required();
  ins->add_flag("--json", json, "Machine-readable output");

  auto* est = app.add_subcommand("estimate", "Estimate the compressed size without writing a file");
  est->add_option("input", in_path, "Input PLY")->required();
  est->add_option("--weights", weights_path, "Model weights")->required();
  est->add_option("--seed", seed, "Batch split seed");
  est->add_option("--chunk-size", chunk_size, "Gaussians per chunk")->check(CLI::PositiveNumber);
  est->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  est->add_flag("--json", json, "Machine-readable output");

  auto* gen = app.add_subcommand("gen-test-weights", "Write deterministic test weights");
  gen->add_option("output", out_path, "Output weights file")->required();
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_flag("--compact", compact, "Narrow hidden layers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; everything else is a usage error.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*enc) {
      const auto weights = fcgs::load_weights(read_file(weights_path));
      const auto cloud = fcgs::parse_ply(read_file(in_path));
      fcgs::EncodeOptions opt;
      opt.seed = seed;
      opt.chunk_size = chunk_size;
      opt.workers = workers;
      const auto result = fcgs::encode_scene_ex(cloud, weights, opt);
      write_file(out_path, result.bytes);
      if (result.symbols && result.clamp_events * 10000 > result.symbols) {
        std::fprintf(stderr, "warning: %llu of %llu symbols were clamped to the coding range\n",
                     static_cast<unsigned long long>(result.clamp_events),
                     static_cast<unsigned long long>(result.symbols));
      }
      std::fprintf(stderr, "%zu Gaussians -> %zu bytes (%.3f bits/Gaussian)\n", cloud.size(), result.bytes.size(),
                   8.0 * double(result.bytes.size()) / double(cloud.size()));
      print_times(result.times);
    } else if (*dec) {
      const auto weights = fcgs::load_weights(read_file(weights_path));
      const auto bytes = read_file(in_path);
      fcgs::PhaseTimes times;
      const auto cloud = fcgs::decode_scene(bytes, weights, workers, nullptr, &times);
      write_file(out_path, fcgs::write_ply(cloud));
      std::fprintf(stderr, "%zu Gaussians decoded\n", cloud.size());
      print_times(times);
    } else if (*ins) {
      const auto bytes = read_file(in_path);
      for (const auto& w : fcgs::read_container(bytes).warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      const auto report = fcgs::inspect(bytes);
      std::cout << (json ? fcgs::report_json(report) + "\n" : fcgs::report_text(report));
    } else if (*est) {
      const auto weights = fcgs::load_weights(read_file(weights_path));
      const auto cloud = fcgs::parse_ply(read_file(in_path));
      fcgs::EncodeOptions opt;
      opt.seed = seed;
      opt.chunk_size = chunk_size;
      opt.workers = workers;
      const auto report = fcgs::estimate_scene(cloud, weights, opt);
      std::cout << (json ? fcgs::report_json(report) + "\n" : fcgs::report_text(report));
    } else if (*gen) {
      fcgs::TestWeightsOptions opt;
      opt.compact = compact;
      const auto weights = fcgs::gen_test_weights(seed, opt);
      write_file(out_path, fcgs::serialize_weights(weights));
      std::fprintf(stderr, "fingerprint %s\n", fcgs::to_hex(weights.fingerprint).c_str());
    }
  } catch (const fcgs::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::bad_alloc&) {
    std::fprintf(stderr, "error: out of memory\n");
    return 1;
  }
  return 0;
}
