#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "commands.hpp"
#include "config.hpp"
#include "doem/errors.hpp"
#include "doem/parallel.hpp"
#include "doem/version.hpp"

using namespace doem::cli;

namespace {

enum Exit { kOk = 0, kInternal = 1, kValidation = 2, kIo = 3, kNumeric = 4, kConditionS = 5 };

// Storage for every flag; CLI11 binds to these by reference.
struct BernoulliFlags {
  int n = 8, modes = 8;
  double p = 0.9;
  long long samples = 1000;
  std::uint64_t seed = 0;
};

struct MnistFlags {
  std::string input, downscale = "none";
  int bits = 1, threshold = 128;
  long long limit = 0;
};

struct DoemFlags {
  std::string data;
  int hidden = 2, iters = 100, inner = 10, checkpoint_every = 0;
  long long limit = 0;
  double lr = 0.1, grad_tol = 1e-6, init_scale = 0.5, gamma_scale = 1.0, visible_gamma = 0.0;
  std::uint64_t seed = 0;
  bool dense = false, with_time = false;
};

struct CdFlags {
  std::string data, idx, downscale = "none", model = "qidbm", encoding = "zero-one";
  std::vector<int> hidden{498, 498};
  int bits = 1, threshold = 128, k = 1, epochs = 100, checkpoint_every = 0;
  long long limit = 0, batch = 600;
  double lr = 0.001, gamma = 1.0, holdout = 0.1;
  std::uint64_t seed = 0;
  bool train_gamma = false, with_time = false;
};

struct EvalFlags {
  std::string model, data, table, exact = "auto";
  bool uniform = false;
  long long rows = 1000, samples = 16;
  int burn_in = 100, cols = 8;
  std::uint64_t seed = 0;
};

struct SampleFlags {
  std::string model;
  long long n = 64;
  int burn_in = 1000, cols = 8;
  std::uint64_t seed = 3;
};

struct Command {
  explicit Command(std::string n) : name(std::move(n)) {}

  std::string name;
  CLI::App* app = nullptr;
  Bindings bind;
  std::string config;
  std::string out;
  void (*run)(json) = nullptr;
};

void common_flags(Command& c) {
  c.app->add_option("--config", c.config, "replay a resolved config.json");
  c.bind.option(c.app, "--out", "out", c.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density-operator EM and quantum-interleaved DBM training"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker cap (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag_callback("--version", [] {
    std::cout << doem::code_version() << "\n";
    throw CLI::Success();
  });

  std::vector<Command*> cmds;
  auto add = [&](Command& c, CLI::App* parent, const std::string& sub, const std::string& help, void (*run)(json)) {
    c.app = parent->add_subcommand(sub, help);
    c.run = run;
    common_flags(c);
    cmds.push_back(&c);
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset");
  gen->require_subcommand(1);

  BernoulliFlags bf;
  Command gb("gen-data bernoulli");
  add(gb, gen, "bernoulli", "mixture of Bernoulli modes", gen_bernoulli);
  gb.bind.option(gb.app, "--n", "n", bf.n, "bits per sample");
  gb.bind.option(gb.app, "--modes", "modes", bf.modes, "number of modes");
  gb.bind.option(gb.app, "--p", "p", bf.p, "probability a bit agrees with its mode");
  gb.bind.option(gb.app, "--samples", "samples", bf.samples, "rows to draw");
  gb.bind.option(gb.app, "--seed", "seed", bf.seed, "seed");

  MnistFlags mf;
  Command gm("gen-data mnist");
  add(gm, gen, "mnist", "binarize IDX images", gen_mnist);
  gm.bind.option(gm.app, "--input", "input", mf.input, "IDX image file (raw or .gz)");
  gm.bind.option(gm.app, "--bits", "bits", mf.bits, "1 (threshold) or 8 (bit planes)");
  gm.bind.option(gm.app, "--downscale", "downscale", mf.downscale, "none, 28to8 or an integer block factor");
  gm.bind.option(gm.app, "--threshold", "threshold", mf.threshold, "1-bit threshold");
  gm.bind.option(gm.app, "--limit", "limit", mf.limit, "keep the first N images (0 = all)");

  DoemFlags df;
  Command td("train-doem");
  add(td, &app, "train-doem", "exact DO-EM on a QBM", train_doem);
  td.bind.option(td.app, "--data", "data", df.data, "dataset dump");
  td.bind.option(td.app, "--limit", "limit", df.limit, "keep the first N rows (0 = all)");
  td.bind.option(td.app, "--hidden", "hidden", df.hidden, "hidden qubits");
  td.bind.option(td.app, "--iters", "iters", df.iters, "outer iterations");
  td.bind.option(td.app, "--inner", "inner", df.inner, "M-step gradient steps");
  td.bind.option(td.app, "--lr", "lr", df.lr, "M-step learning rate");
  td.bind.option(td.app, "--grad-tol", "grad_tol", df.grad_tol, "stop when the max gradient entry falls below this");
  td.bind.option(td.app, "--init-scale", "init_scale", df.init_scale, "b, w drawn from U(-s, s)");
  td.bind.option(td.app, "--gamma-scale", "gamma_scale", df.gamma_scale, "hidden gamma drawn from U(0, s)");
  td.bind.option(td.app, "--visible-gamma", "visible_gamma", df.visible_gamma,
                 "transverse field on visible qubits (needs --dense)");
  td.bind.option(td.app, "--seed", "seed", df.seed, "seed");
  td.bind.option(td.app, "--checkpoint-every", "checkpoint_every", df.checkpoint_every, "0 disables");
  td.bind.flag(td.app, "--dense", "dense", df.dense, "full density-matrix path with Condition S checks");
  td.bind.flag(td.app, "--with-time", "with_time", df.with_time, "fill the seconds column");

  CdFlags cf;
  Command tc("train-cd");
  add(tc, &app, "train-cd", "contrastive divergence for QiDBM / DBM", train_cd);
  tc.bind.option(tc.app, "--data", "data", cf.data, "dataset dump");
  tc.bind.option(tc.app, "--idx", "idx", cf.idx, "IDX image file used instead of --data");
  tc.bind.option(tc.app, "--bits", "bits", cf.bits, "with --idx: 1 or 8");
  tc.bind.option(tc.app, "--downscale", "downscale", cf.downscale, "with --idx: none, 28to8 or a factor");
  tc.bind.option(tc.app, "--threshold", "threshold", cf.threshold, "with --idx --bits 1");
  tc.bind.option(tc.app, "--limit", "limit", cf.limit, "keep the first N rows (0 = all)");
  tc.bind.option(tc.app, "--hidden", "hidden", cf.hidden, "sizes of the two hidden layers")->expected(2);
  tc.bind.option(tc.app, "--model", "model", cf.model, "qidbm or dbm");
  tc.bind.option(tc.app, "--gamma", "gamma", cf.gamma, "initial transverse field on the middle layer");
  tc.bind.option(tc.app, "--encoding", "encoding", cf.encoding, "zero-one or plus-minus");
  tc.bind.option(tc.app, "--epochs", "epochs", cf.epochs, "epochs");
  tc.bind.option(tc.app, "--k", "k", cf.k, "Gibbs sweeps in the negative phase");
  tc.bind.option(tc.app, "--lr", "lr", cf.lr, "learning rate");
  tc.bind.option(tc.app, "--batch", "batch", cf.batch, "batch size");
  tc.bind.option(tc.app, "--holdout", "holdout", cf.holdout, "held-out fraction");
  tc.bind.flag(tc.app, "--train-gamma", "train_gamma", cf.train_gamma, "also update gamma");
  tc.bind.option(tc.app, "--seed", "seed", cf.seed, "seed");
  tc.bind.option(tc.app, "--checkpoint-every", "checkpoint_every", cf.checkpoint_every, "epochs between checkpoints");
  tc.bind.flag(tc.app, "--with-time", "with_time", cf.with_time, "fill the seconds column");

  EvalFlags ef;
  Command ev("eval");
  add(ev, &app, "eval", "exact or sampled metrics for a trained model", eval);
  ev.bind.option(ev.app, "--model", "model", ef.model, "model.json (QBM) or .ckpt (QiDBM/DBM)");
  ev.bind.option(ev.app, "--data", "data", ef.data, "dataset dump");
  ev.bind.option(ev.app, "--table", "table", ef.table, "exact target table (index,probability csv)");
  ev.bind.flag(ev.app, "--uniform", "uniform", ef.uniform, "uniform target");
  ev.bind.option(ev.app, "--exact", "exact", ef.exact, "auto, yes or no");
  ev.bind.option(ev.app, "--rows", "rows", ef.rows, "rows used for reconstruction error");
  ev.bind.option(ev.app, "--samples", "samples", ef.samples, "sample grid size for large models");
  ev.bind.option(ev.app, "--burn-in", "burn_in", ef.burn_in, "Gibbs sweeps before sampling");
  ev.bind.option(ev.app, "--cols", "cols", ef.cols, "images per grid row");
  ev.bind.option(ev.app, "--seed", "seed", ef.seed, "seed");

  SampleFlags sf;
  Command sa("sample");
  add(sa, &app, "sample", "draw samples from a checkpoint", sample);
  sa.bind.option(sa.app, "--model", "model", sf.model, "checkpoint");
  sa.bind.option(sa.app, "--n", "n", sf.n, "samples");
  sa.bind.option(sa.app, "--burn-in", "burn_in", sf.burn_in, "Gibbs sweeps before sampling");
  sa.bind.option(sa.app, "--cols", "cols", sf.cols, "images per grid row");
  sa.bind.option(sa.app, "--seed", "seed", sf.seed, "seed");

  for (Command* c : cmds) c->bind.snapshot_defaults();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    doem::set_max_threads(threads);
    for (Command* c : cmds) {
      if (!c->app->parsed()) continue;
      json cfg = c->bind.resolve(c->name, c->config);
      cfg["threads"] = threads;
      c->run(std::move(cfg));
    }
    return kOk;
  } catch (const doem::ConditionSViolation& e) {
    std::cerr << "condition S violated: " << e.what() << "\n";
    return kConditionS;
  } catch (const doem::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const doem::SchemaError& e) {
    std::cerr << "schema error in field '" << e.field() << "': " << e.what() << "\n";
    return kIo;
  } catch (const doem::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const doem::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
