#include <fstream>
#include <map>
#include <sstream>

#include "drift/experiments.hpp"

namespace drift {

void ExperimentConfig::validate() const {
  if (task != "toy2d" && task != "denoise" && task != "unpaired" &&
      task != "drift-eval" && task != "stft-check")
    throw ConfigError("unknown task: " + task);
  if (!seed) throw ConfigError("seed is mandatory (config [experiment] seed or --seed)");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  try {
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (task == "toy2d" &&
      (toy_steps < 1 || toy_eval_interval < 1 || toy_eval_size < 2))
    throw ConfigError("bad toy2d sizes");
  if (task == "denoise" || task == "unpaired") {
    if (excerpt_len < 510 + 128)
      throw ConfigError("excerpt_len too short for the spectral geometry");
    if (corpus_size < train.batch_size)
      throw ConfigError("corpus_size must be >= batch_size");
  }
  if (noise_kind != "white" && noise_kind != "lowpass" && noise_kind != "bandpass")
    throw ConfigError("noise_kind must be white|lowpass|bandpass");
  if (encoder_kind != "identity" && encoder_kind != "random_stack")
    throw ConfigError("encoder_kind must be identity|random_stack");
  if (sigma_mode != "schedule" && sigma_mode != "zero")
    throw ConfigError("sigma_mode must be schedule|zero");
  if (snr_db.empty()) throw ConfigError("snr_db must not be empty");
}

ExperimentConfig default_config(const std::string& task) {
  ExperimentConfig cfg;
  cfg.task = task;
  if (task == "toy2d") {
    cfg.train.batch_size = 256;
    cfg.train.opt.lr = 2e-3;
    cfg.train.opt.weight_decay = 0.01;
    cfg.gen_hidden = {64, 64};
    cfg.train.sigma_schedule.reset();
  } else {
    cfg.train.batch_size = 16;
    cfg.train.opt.lr = 5e-4;
    cfg.train.opt.weight_decay = 0.01;
    cfg.train.epochs = 100;
    cfg.gen_hidden = {192, 192};
    cfg.train.sigma_schedule = NoiseSchedule{};
  }
  if (task == "unpaired") {
    cfg.train.pairing = Pairing::unpaired;
    cfg.corpus_size = 48;
    cfg.eval_size = 12;
    cfg.train.epochs = 40;
    cfg.snapshot_epochs = {};
  }
  return cfg;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto a = tok.find_first_not_of(" \t");
    const auto b = tok.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(tok.substr(a, b - a + 1));
  }
  return out;
}

std::vector<int> int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& t : split_list(s)) out.push_back(std::stoi(t));
  return out;
}

std::vector<double> double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split_list(s)) out.push_back(std::stod(t));
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("bad boolean: " + s);
}

}  // namespace

ExperimentConfig load_config(const std::string& path, const std::string& task) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);

  ExperimentConfig cfg = default_config(task);
  std::string line, section = "experiment";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r\n");
    line = line.substr(first, last - first + 1);
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("bad section header at line " + std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key=value at line " + std::to_string(lineno));
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    };
    trim(key);
    trim(val);
    const std::string full = section + "." + key;

    try {
      if (full == "experiment.task") {
        if (val != task)
          throw ConfigError("config task '" + val + "' does not match CLI task");
      } else if (full == "experiment.seed") {
        cfg.seed = std::stoull(val);
      } else if (full == "experiment.out") {
        cfg.out_dir = val;
      } else if (full == "train.batch_size") {
        cfg.train.batch_size = std::stoi(val);
      } else if (full == "train.epochs") {
        cfg.train.epochs = std::stoi(val);
      } else if (full == "train.lr") {
        cfg.train.opt.lr = std::stod(val);
      } else if (full == "train.weight_decay") {
        cfg.train.opt.weight_decay = std::stod(val);
      } else if (full == "train.paradigm") {
        if (val == "direct")
          cfg.train.paradigm = Paradigm::direct_mapping;
        else if (val == "conditional")
          cfg.train.paradigm = Paradigm::conditional;
        else
          throw ConfigError("paradigm must be direct|conditional");
      } else if (full == "train.negatives_full_batch") {
        cfg.train.negatives_full_batch = parse_bool(val);
      } else if (full == "train.exclude_self") {
        cfg.train.exclude_self = parse_bool(val);
      } else if (full == "train.sigma") {
        cfg.sigma_mode = val;
      } else if (full == "train.hidden") {
        cfg.gen_hidden = int_list(val);
      } else if (full == "kernel.temperatures") {
        cfg.train.kernel.temperatures = double_list(val);
      } else if (full == "encoder.kind") {
        cfg.encoder_kind = val;
      } else if (full == "encoder.dims") {
        cfg.encoder_dims = int_list(val);
      } else if (full == "encoder.taps") {
        cfg.encoder_taps = int_list(val);
      } else if (full == "encoder.latent_gain") {
        cfg.latent_gain = std::stod(val);
      } else if (full == "data.excerpt_len") {
        cfg.excerpt_len = std::stoi(val);
      } else if (full == "data.corpus_size") {
        cfg.corpus_size = std::stoi(val);
      } else if (full == "data.eval_size") {
        cfg.eval_size = std::stoi(val);
      } else if (full == "data.pool_size") {
        cfg.pool_size = std::stoi(val);
      } else if (full == "data.snr_db") {
        cfg.snr_db = double_list(val);
      } else if (full == "data.eval_snr_db") {
        cfg.eval_snr_db = std::stod(val);
      } else if (full == "data.noise_kind") {
        cfg.noise_kind = val;
      } else if (full == "toy2d.steps") {
        cfg.toy_steps = std::stoi(val);
      } else if (full == "toy2d.eval_interval") {
        cfg.toy_eval_interval = std::stoi(val);
      } else if (full == "toy2d.eval_size") {
        cfg.toy_eval_size = std::stoi(val);
      } else if (full == "toy2d.target") {
        cfg.toy_target = val;
      } else if (full == "toy2d.ring_modes") {
        cfg.toy_ring_modes = std::stoi(val);
      } else if (full == "toy2d.ring_radius") {
        cfg.toy_ring_radius = std::stod(val);
      } else if (full == "toy2d.ring_sigma") {
        cfg.toy_ring_sigma = std::stod(val);
      } else if (full == "toy2d.snapshot_steps") {
        cfg.toy_snapshot_steps = int_list(val);
      } else if (full == "report.snapshot_epochs") {
        cfg.snapshot_epochs = int_list(val);
      } else if (full == "report.eval_interval_epochs") {
        cfg.eval_interval_epochs = std::stoi(val);
      } else if (full == "report.mmd_interval") {
        cfg.mmd_interval = std::stoi(val);
      } else if (full == "report.wav_examples") {
        cfg.wav_examples = std::stoi(val);
      } else if (full == "harness.oracle_instances") {
        cfg.oracle_instances = std::stoi(val);
      } else if (full == "harness.gradient_instances") {
        cfg.gradient_instances = std::stoi(val);
      } else {
        throw ConfigError("unknown config key: " + full);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("bad value for " + full + " at line " +
                        std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

}  // namespace drift
