#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "doem/data_io.hpp"
#include "doem/doem_engine.hpp"
#include "doem/errors.hpp"
#include "doem/models.hpp"
#include "doem/qidbm.hpp"

namespace doem::cli {

namespace fs = std::filesystem;

namespace {

struct ImageShape {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t bits = 1;
};

ImageShape image_shape(const json& provenance) {
  ImageShape s;
  if (provenance.contains("image")) {
    const json& im = provenance["image"];
    s.height = im.value("height", 0u);
    s.width = im.value("width", 0u);
    s.bits = im.value("bits_per_pixel", 1u);
  }
  return s;
}

BinaryDataset limit_rows(BinaryDataset ds, Index limit) {
  if (limit <= 0 || limit >= ds.rows()) return ds;
  std::vector<Index> keep(static_cast<std::size_t>(limit));
  for (Index i = 0; i < limit; ++i) keep[static_cast<std::size_t>(i)] = i;
  BinaryDataset out = ds.subset_rows(keep);
  out.provenance["limit"] = limit;
  return out;
}

IdxTensor resize_images(const IdxTensor& images, const std::string& mode) {
  if (mode == "none" || mode.empty()) return images;
  if (mode == "28to8") return downscale_28_to_8(images);
  int factor = 0;
  try {
    factor = std::stoi(mode);
  } catch (const std::exception&) {
    throw ValidationError("--downscale must be none, 28to8 or an integer factor, got '" + mode + "'");
  }
  return downscale(images, factor);
}

BinaryDataset images_to_dataset(const fs::path& input, int bits, const std::string& resize, int threshold,
                                Index limit) {
  if (bits != 1 && bits != 8) throw ValidationError("--bits must be 1 or 8");
  IdxTensor images = read_idx(input);
  if (images.dims.size() != 3) throw ValidationError(input.string() + " is not an image tensor");
  if (limit > 0 && limit < images.count()) {
    images.data.resize(static_cast<std::size_t>(limit * images.item_size()));
    images.dims[0] = static_cast<std::uint32_t>(limit);
  }
  images = resize_images(images, resize);
  BinaryDataset ds = bits == 1 ? binarize_1bit(images, threshold) : encode_8bit_planes(images);
  ds.provenance["source"] = input.filename().string();
  ds.provenance["source_sha256"] = sha256_file(input);
  ds.provenance["downscale"] = resize;
  ds.provenance["image"] = {{"height", images.dims[1]}, {"width", images.dims[2]}, {"bits_per_pixel", bits}};
  return ds;
}

// Dataset named by --data, or built from --idx images.
BinaryDataset load_training_data(const json& cfg) {
  const std::string data = cfg.value("data", std::string());
  const std::string idx = cfg.value("idx", std::string());
  if (data.empty() == idx.empty()) throw ValidationError("give exactly one of --data or --idx");
  const Index limit = cfg.value("limit", Index{0});
  if (!data.empty()) return limit_rows(read_dataset(data), limit);
  return images_to_dataset(idx, cfg.at("bits").get<int>(), cfg.value("downscale", std::string("none")),
                           cfg.value("threshold", 128), limit);
}

RealVector read_table_csv(const fs::path& path, int* d_v) {
  const auto bytes = read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::getline(in, line);
  if (line.rfind("index,probability", 0) != 0) throw ValidationError(path.string() + ": expected an index,probability header");
  std::vector<double> p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError(path.string() + ": malformed line '" + line + "'");
    const auto idx = static_cast<std::size_t>(std::stoull(line.substr(0, comma)));
    if (idx != p.size()) throw ValidationError(path.string() + ": rows must be listed in index order");
    p.push_back(std::stod(line.substr(comma + 1)));
  }
  int d = 0;
  while ((std::size_t{1} << d) < p.size()) ++d;
  if (p.empty() || (std::size_t{1} << d) != p.size()) throw ValidationError(path.string() + ": table length is not a power of two");
  *d_v = d;
  return Eigen::Map<RealVector>(p.data(), static_cast<Index>(p.size()));
}

// Target from --table, --uniform or --data; d_v is the model's visible width.
VisibleDistribution load_target(const json& cfg, int d_v) {
  const std::string table = cfg.value("table", std::string());
  const std::string data = cfg.value("data", std::string());
  const bool uniform = cfg.value("uniform", false);
  if (int(!table.empty()) + int(!data.empty()) + int(uniform) != 1)
    throw ValidationError("eval needs exactly one target: --table, --data or --uniform");
  VisibleDistribution t;
  if (!table.empty()) {
    int d = 0;
    const RealVector p = read_table_csv(table, &d);
    t = VisibleDistribution::from_dense(d, p);
  } else if (uniform) {
    if (d_v > 20) throw ValidationError("uniform target limited to 20 visible units");
    t = VisibleDistribution::from_dense(d_v, RealVector::Constant(Index{1} << d_v, std::ldexp(1.0, -d_v)));
  } else {
    t = empirical_table(read_dataset(data)).distribution();
  }
  if (t.d_v != d_v) {
    std::ostringstream os;
    os << "target has " << t.d_v << " visible bits, model has " << d_v;
    throw ValidationError(os.str());
  }
  return t;
}

std::vector<std::uint8_t> bits_to_pixels(const std::vector<std::uint8_t>& bits, int l, const ImageShape& s) {
  if (s.bits == 8) {
    BinaryDataset ds = BinaryDataset::from_bits(l, bits, Encoding::ZeroOne, json::object());
    return decode_8bit_planes(ds, s.height, s.width).data;
  }
  std::vector<std::uint8_t> px(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) px[i] = bits[i] ? 255 : 0;
  return px;
}

bool image_shaped(const CheckpointMeta& meta, int l) {
  return meta.image_height > 0 &&
         static_cast<Index>(meta.image_height) * meta.image_width * meta.bits_per_pixel == static_cast<Index>(l);
}

// Writes samples.bits and, for image-shaped models, samples.pgm.
json dump_samples(const fs::path& out, const QidbmParams& p, const CheckpointMeta& meta, Index n, int burn_in,
                  std::uint64_t seed, int cols) {
  const auto bits = generate(p, meta.kind, meta.encoding, n, burn_in, seed);
  write_bit_matrix(out / "samples.bits", bits, n, p.l);
  json files = json::array({"samples.bits"});
  if (image_shaped(meta, p.l)) {
    const ImageShape s{meta.image_height, meta.image_width, meta.bits_per_pixel};
    write_pgm_grid(out / "samples.pgm", bits_to_pixels(bits, p.l, s), n, s.height, s.width, cols);
    files.push_back("samples.pgm");
  }
  return files;
}

QbmSpec load_qbm_model(const fs::path& path) {
  const json j = load_json_file(path);
  return qbm_spec_from_json(j.contains("model") ? j["model"] : j);
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace

void gen_bernoulli(json cfg) {
  BernoulliMixtureSpec spec;
  spec.n_bits = cfg.at("n").get<int>();
  spec.n_modes = cfg.at("modes").get<int>();
  spec.p = cfg.at("p").get<double>();
  spec.n_samples = cfg.at("samples").get<Index>();
  spec.seed = cfg.at("seed").get<std::uint64_t>();
  spec.validate();
  const fs::path out = prepare_output(cfg, "gen-data");
  const BernoulliMixture mix = gen_bernoulli_mixture(spec);
  write_dataset(out / "data.bin", mix.dataset);
  if (mix.table.size() > 0) {
    std::ostringstream os;
    write_distribution_csv(os, mix.table);
    write_text_file(out / "table.csv", os.str());
  }
  std::cout << "wrote " << mix.dataset.rows() << " rows of " << spec.n_bits << " bits to " << (out / "data.bin").string()
            << "\n";
}

void gen_mnist(json cfg) {
  const std::string input = cfg.at("input").get<std::string>();
  if (input.empty()) throw ValidationError("gen-data mnist needs --input");
  const BinaryDataset ds = images_to_dataset(input, cfg.at("bits").get<int>(), cfg.at("downscale").get<std::string>(),
                                             cfg.at("threshold").get<int>(), cfg.at("limit").get<Index>());
  const fs::path out = prepare_output(cfg, "gen-data");
  write_dataset(out / "data.bin", ds);
  std::cout << "wrote " << ds.rows() << " rows of " << ds.d_v << " units to " << (out / "data.bin").string() << "\n";
}

void train_doem(json cfg) {
  const std::string data = cfg.at("data").get<std::string>();
  if (data.empty()) throw ValidationError("train-doem needs --data");
  const BinaryDataset ds = limit_rows(read_dataset(data), cfg.at("limit").get<Index>());
  const VisibleDistribution target = empirical_table(ds).distribution();

  QbmSpec spec = QbmSpec::random(ds.d_v, cfg.at("hidden").get<int>(), cfg.at("seed").get<std::uint64_t>(),
                                 cfg.at("init_scale").get<double>(), cfg.at("gamma_scale").get<double>());
  const double vg = cfg.at("visible_gamma").get<double>();
  if (vg != 0.0) spec.gamma.head(spec.m).setConstant(vg);
  const bool dense = cfg.at("dense").get<bool>();
  // Refuse before touching the output directory.
  if (!dense) cqlvm_blocks(spec);

  DoemConfig dc;
  dc.max_outer_iters = cfg.at("iters").get<int>();
  dc.m_step_inner_iters = cfg.at("inner").get<int>();
  dc.learning_rate = cfg.at("lr").get<double>();
  dc.grad_tol = cfg.at("grad_tol").get<double>();
  dc.seed = cfg.at("seed").get<std::uint64_t>();
  dc.checkpoint_every = cfg.at("checkpoint_every").get<int>();
  dc.checkpoint_dir = "checkpoints";  // placeholder until the output directory exists
  dc.validate();

  const fs::path out = prepare_output(cfg, "train-doem");
  dc.checkpoint_dir = out / "checkpoints";
  const DoemResult res = dense ? run_doem_dense(target.density(), spec, dc) : run_doem(target, spec, dc);

  std::ostringstream csv;
  res.trace.write_csv(csv, cfg.at("with_time").get<bool>());
  write_text_file(out / "trace.csv", csv.str());
  json model;
  model["model"] = to_json(res.spec);
  model["stop"] = to_string(res.stop);
  model["final_log_likelihood"] = res.final_log_likelihood;
  model["final_relative_entropy"] = -res.final_log_likelihood - target.entropy();
  model["ascent_violations"] = res.ascent_violations;
  write_json(out / "model.json", model);

  const auto& recs = res.trace.records;
  std::cout << "iterations " << recs.size() << ", stop " << to_string(res.stop) << "\n";
  if (!recs.empty())
    std::cout << "rel_entropy " << fmt_double(recs.front().relative_entropy) << " -> "
              << fmt_double(model["final_relative_entropy"].get<double>()) << "\n";
  if (res.ascent_violations > 0)
    std::cout << "warning: " << res.ascent_violations << " log-likelihood decreases, worst "
              << fmt_double(res.worst_ascent_drop) << "\n";
}

void train_cd(json cfg) {
  const BinaryDataset ds = load_training_data(cfg);
  const auto hidden = cfg.at("hidden").get<std::vector<int>>();
  if (hidden.size() != 2) throw ValidationError("--hidden takes two layer sizes");

  CdConfig cc;
  cc.k = cfg.at("k").get<int>();
  cc.learning_rate = cfg.at("lr").get<double>();
  cc.batch_size = cfg.at("batch").get<Index>();
  cc.epochs = cfg.at("epochs").get<int>();
  cc.seed = cfg.at("seed").get<std::uint64_t>();
  cc.encoding = encoding_from_string(cfg.at("encoding").get<std::string>());
  cc.kind = model_kind_from_string(cfg.at("model").get<std::string>());
  cc.train_gamma = cfg.at("train_gamma").get<bool>();
  cc.holdout_fraction = cfg.at("holdout").get<double>();
  cc.validate();
  const double gamma = cfg.at("gamma").get<double>();
  if (cc.kind == ModelKind::Dbm && gamma != 0.0) throw ValidationError("a classical DBM takes no transverse field; drop --gamma");
  const QidbmParams init = QidbmParams::init(ds.d_v, hidden[0], hidden[1], gamma, cc.seed);

  const fs::path out = prepare_output(cfg, "train-cd");
  const ImageShape shape = image_shape(ds.provenance);
  CheckpointMeta meta;
  meta.encoding = cc.encoding;
  meta.kind = cc.kind;
  meta.seed = cc.seed;
  meta.config_hash = cfg.at("config_hash").get<std::string>();
  meta.image_height = shape.height;
  meta.image_width = shape.width;
  meta.bits_per_pixel = shape.bits;

  const int every = cfg.at("checkpoint_every").get<int>();
  if (every < 0) throw ValidationError("--checkpoint-every must be non-negative");
  const bool with_time = cfg.at("with_time").get<bool>();
  std::ostringstream csv;
  csv << "epoch,recon_error,holdout_free_energy,seconds\n";
  auto on_epoch = [&](const QidbmParams& p, const EpochStats& st) {
    csv << st.epoch << ',' << fmt_double(st.reconstruction_error) << ','
        << (std::isnan(st.holdout_free_energy) ? std::string() : fmt_double(st.holdout_free_energy)) << ','
        << (with_time ? fmt_double(st.seconds) : std::string()) << '\n';
    std::cout << "epoch " << st.epoch << " recon " << fmt_double(st.reconstruction_error) << "\n";
    if (every > 0 && (st.epoch + 1) % every == 0) {
      fs::create_directories(out / "checkpoints");
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", st.epoch + 1);
      CheckpointMeta m = meta;
      m.epoch = static_cast<std::uint64_t>(st.epoch + 1);
      save_checkpoint(out / "checkpoints" / name, p, m);
    }
  };
  const TrainReport rep = train(ds, init, cc, on_epoch);
  write_text_file(out / "epochs.csv", csv.str());
  meta.epoch = static_cast<std::uint64_t>(cc.epochs);
  save_checkpoint(out / "final.ckpt", rep.params, meta);
}

void eval(json cfg) {
  const fs::path model_path = cfg.at("model").get<std::string>();
  if (model_path.empty()) throw ValidationError("eval needs --model");
  const std::string exact = cfg.at("exact").get<std::string>();
  if (exact != "auto" && exact != "yes" && exact != "no") throw ValidationError("--exact must be auto, yes or no");
  json metrics;

  if (model_path.extension() == ".json") {
    const QbmSpec spec = load_qbm_model(model_path);
    if (exact == "no") throw ValidationError("a QBM is only evaluated exactly");
    if (spec.total() > kExactQubitCap) {
      std::ostringstream os;
      os << "exact evaluation refused: QBM has " << spec.total() << " qubits, above the exact-path cap of "
         << kExactQubitCap;
      throw ValidationError(os.str());
    }
    const VisibleDistribution target = load_target(cfg, spec.m);
    const fs::path out = prepare_output(cfg, "eval");
    const DensityOperator rho_v = model_marginal(gibbs_state(build_qbm_hamiltonian(spec)), spec.m);
    const double ll = log_likelihood(target.density(), rho_v);
    metrics["model"] = "qbm";
    metrics["visible"] = spec.m;
    metrics["hidden"] = spec.n;
    metrics["log_likelihood"] = ll;
    metrics["nll"] = -ll;
    metrics["relative_entropy"] = -ll - target.entropy();
    write_json(out / "metrics.json", metrics);
    std::cout << metrics.dump(2) << "\n";
    return;
  }

  CheckpointMeta meta;
  const QidbmParams p = load_checkpoint(model_path, &meta);
  const bool feasible = p.l <= 20 && p.m + p.n <= kExactQubitCap;
  if (exact == "yes" && !feasible) {
    std::ostringstream os;
    os << "exact evaluation refused: model has " << p.l << " visible and " << p.m + p.n
       << " hidden units; the dense path is capped at 20 visible and " << kExactQubitCap << " hidden";
    throw ValidationError(os.str());
  }
  const bool do_exact = feasible && exact != "no";
  const std::string data = cfg.value("data", std::string());
  const fs::path out = prepare_output(cfg, "eval");
  metrics["model"] = to_string(meta.kind);
  metrics["encoding"] = to_string(meta.encoding);
  metrics["dims"] = {p.l, p.m, p.n};
  metrics["epoch"] = meta.epoch;

  if (do_exact) {
    const VisibleDistribution target = load_target(cfg, p.l);
    const RealVector pv = exact_visible_distribution(p, meta.kind, meta.encoding);
    double cross = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) cross -= target.prob[i] * std::log(pv(target.index[i]));
    metrics["nll"] = cross;
    metrics["relative_entropy"] = cross - target.entropy();
  } else {
    const Index rows = cfg.at("rows").get<Index>();
    if (!data.empty()) {
      const BinaryDataset ds = limit_rows(read_dataset(data), rows);
      if (ds.d_v != p.l) throw ValidationError("dataset width does not match the model");
      CdConfig cc;
      cc.k = 1;
      cc.encoding = meta.encoding;
      cc.kind = meta.kind;
      cc.batch_size = ds.rows();
      std::vector<RngStream> rngs = batch_streams(cfg.at("seed").get<std::uint64_t>(), 0, 0, ds.rows());
      metrics["reconstruction_error"] = cd_step(ds.matrix(meta.encoding), p, cc, rngs).reconstruction_error;
      metrics["rows"] = ds.rows();
    }
    metrics["files"] = dump_samples(out, p, meta, cfg.at("samples").get<Index>(), cfg.at("burn_in").get<int>(),
                                    cfg.at("seed").get<std::uint64_t>(), cfg.at("cols").get<int>());
  }
  write_json(out / "metrics.json", metrics);
  std::cout << metrics.dump(2) << "\n";
}

void sample(json cfg) {
  const std::string model = cfg.at("model").get<std::string>();
  if (model.empty()) throw ValidationError("sample needs --model");
  CheckpointMeta meta;
  const QidbmParams p = load_checkpoint(model, &meta);
  const Index n = cfg.at("n").get<Index>();
  if (n < 1) throw ValidationError("--n must be positive");
  const fs::path out = prepare_output(cfg, "sample");
  const json files = dump_samples(out, p, meta, n, cfg.at("burn_in").get<int>(), cfg.at("seed").get<std::uint64_t>(),
                                  cfg.at("cols").get<int>());
  for (const auto& f : files) std::cout << (out / f.get<std::string>()).string() << "\n";
}

}  // namespace doem::cli
