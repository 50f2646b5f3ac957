#include "mcl/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <system_error>
#include <thread>

#include "mcl/errors.hpp"

namespace fs = std::filesystem;

namespace mcl {

namespace {

std::string g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Shortest decimal form that parses back to the same double.
std::string exact(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_line(int lineno, const std::string& what) {
  throw ConfigError("line " + std::to_string(lineno) + ": " + what);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!((c >= 'a' && c <= 'z') || c == '_' || c == '.')) return false;
  return true;
}

double parse_double(const std::string& v, int lineno) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad_line(lineno, "expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& v, int lineno) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    bad_line(lineno, "expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, int lineno) {
  try {
    std::size_t pos = 0;
    const unsigned long long i = std::stoull(v, &pos);
    if (pos != v.size() || v.find('-') != std::string::npos)
      throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    bad_line(lineno, "expected an unsigned integer, got '" + v + "'");
  }
}

std::vector<int> parse_int_list(const std::string& v, int lineno) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(static_cast<int>(parse_int(trim(item), lineno)));
  if (out.empty()) bad_line(lineno, "expected a comma-separated list");
  return out;
}

void apply_key(TrainConfig& cfg, const std::string& key,
               const std::string& value, int lineno) {
  try {
    if (key == "lambda")
      cfg.lambda = parse_double(value, lineno);
    else if (key == "ema_w")
      cfg.ema_w = parse_double(value, lineno);
    else if (key == "steps")
      cfg.steps = parse_int_list(value, lineno);
    else if (key == "mode")
      cfg.mode = negative_mode_from_string(value);
    else if (key == "loss")
      cfg.loss_kind = loss_kind_from_string(value);
    else if (key == "lr")
      cfg.lr = parse_double(value, lineno);
    else if (key == "total_iters")
      cfg.total_iters = parse_int(value, lineno);
    else if (key == "batch")
      cfg.batch = parse_int(value, lineno);
    else if (key == "seed")
      cfg.seed = parse_u64(value, lineno);
    else if (key == "eval_every")
      cfg.eval_every = parse_int(value, lineno);
    else if (key == "pretrained")
      cfg.pretrained_path = value;
    else if (key == "net.depth")
      cfg.net.depth = static_cast<int>(parse_int(value, lineno));
    else if (key == "net.width")
      cfg.net.width = static_cast<int>(parse_int(value, lineno));
    else if (key == "net.kernel")
      cfg.net.kernel = static_cast<int>(parse_int(value, lineno));
    else if (key == "net.in_channels")
      cfg.net.in_channels = static_cast<int>(parse_int(value, lineno));
    else if (key == "embed.taps")
      cfg.embed.taps = static_cast<int>(parse_int(value, lineno));
    else if (key == "embed.width")
      cfg.embed.width = static_cast<int>(parse_int(value, lineno));
    else if (key == "embed.in_channels")
      cfg.embed.in_channels = static_cast<int>(parse_int(value, lineno));
    else if (key == "embed.seed")
      cfg.embed.seed = parse_u64(value, lineno);
    else if (key == "dataset.task")
      cfg.dataset.task = task_from_string(value);
    else if (key == "dataset.count")
      cfg.dataset.count = static_cast<int>(parse_int(value, lineno));
    else if (key == "dataset.size")
      cfg.dataset.size = static_cast<int>(parse_int(value, lineno));
    else if (key == "dataset.channels")
      cfg.dataset.channels = static_cast<int>(parse_int(value, lineno));
    else if (key == "dataset.seed")
      cfg.dataset.seed = parse_u64(value, lineno);
    else if (key == "dataset.beta_min")
      cfg.dataset.beta_min = parse_double(value, lineno);
    else if (key == "dataset.beta_max")
      cfg.dataset.beta_max = parse_double(value, lineno);
    else if (key == "dataset.airlight_min")
      cfg.dataset.airlight_min = parse_double(value, lineno);
    else if (key == "dataset.airlight_max")
      cfg.dataset.airlight_max = parse_double(value, lineno);
    else if (key == "dataset.density_min")
      cfg.dataset.density_min = parse_double(value, lineno);
    else if (key == "dataset.density_max")
      cfg.dataset.density_max = parse_double(value, lineno);
    else if (key == "dataset.angle_min")
      cfg.dataset.angle_min = parse_double(value, lineno);
    else if (key == "dataset.angle_max")
      cfg.dataset.angle_max = parse_double(value, lineno);
    else if (key == "dataset.sigma_min")
      cfg.dataset.sigma_min = parse_double(value, lineno);
    else if (key == "dataset.sigma_max")
      cfg.dataset.sigma_max = parse_double(value, lineno);
    else
      bad_line(lineno, "unknown key '" + key + "'");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind("line ", 0) == 0) throw;  // already carries the location
    bad_line(lineno, msg);
  }
}

std::string pair_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair%04zu", i);
  return buf;
}

std::string manifest_line(const std::string& stem, const DegradeMeta& m) {
  std::ostringstream os;
  os << stem << " task=" << to_string(m.task)
     << " clean_seed=" << m.clean_seed << " field_seed=" << m.field_seed
     << " scale=" << m.scale << " beta=" << exact(m.beta)
     << " airlight=" << exact(m.airlight) << " density=" << exact(m.density)
     << " angle_deg=" << exact(m.angle_deg) << " sigma=" << exact(m.sigma);
  return os.str();
}

// Writes pairs [begin, end) as PGM/PPM files plus manifest.txt, numbering
// the written pairs from zero.
void write_pair_files(const std::vector<ImagePair>& pairs, const fs::path& dir,
                      std::size_t begin, std::size_t end) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
  std::string manifest;
  for (std::size_t i = begin; i < end; ++i) {
    const std::string stem = pair_stem(i - begin);
    const char* ext = pairs[i].lq.shape().c == 3 ? ".ppm" : ".pgm";
    write_pnm((dir / (stem + "_lq" + ext)).string(), pairs[i].lq);
    write_pnm((dir / (stem + "_hq" + ext)).string(), pairs[i].hq);
    manifest += manifest_line(stem, pairs[i].meta);
    manifest += '\n';
  }
  std::ofstream mf(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest in " + dir.string());
  mf << manifest;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

std::string manifest_text(const std::string& config_path,
                          const std::string& out_dir,
                          const TrainConfig& cfg) {
  std::string text;
  text += "config_file = " + config_path + "\n";
  text += "output_dir = " + out_dir + "\n";
  text += "build_id = " + build_id() + "\n";
  text += "\n# resolved configuration\n";
  text += dump_config(cfg);
  return text;
}

// Runs one training and writes the standard output files. Returns the
// report so callers can pull summary values out of it.
TrainReport run_into_dir(const TrainConfig& cfg,
                         const std::string& config_path,
                         const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string());
  write_text_file(out_dir / "manifest.txt",
                  manifest_text(config_path, out_dir.string(), cfg));
  TrainReport report = fit(cfg);
  write_metrics_csv((out_dir / "metrics.csv").string(), report.records);
  const long long last_iter =
      report.records.empty() ? 0 : report.records.back().iter;
  save_checkpoint((out_dir / "final.ckpt").string(), report.params,
                  last_iter);
  return report;
}

struct ArmSpec {
  std::string name;
  TrainConfig cfg;
};

std::vector<ArmSpec> build_arms(const std::string& grid,
                                const TrainConfig& base,
                                const fs::path& out_dir) {
  auto gname = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  std::vector<ArmSpec> arms;
  if (grid == "lambda") {
    for (double v : {0.0, 1e-2, 1e-3, 5e-4, 1e-4, 1e-5}) {
      ArmSpec arm{"lambda_" + gname(v), base};
      arm.cfg.lambda = v;
      arms.push_back(std::move(arm));
    }
  } else if (grid == "ema_w") {
    for (double v : {0.0, 0.01, 0.1, 0.5, 0.9, 0.999}) {
      ArmSpec arm{"ema_w_" + gname(v), base};
      arm.cfg.ema_w = v;
      arms.push_back(std::move(arm));
    }
  } else if (grid == "step") {
    for (int s : base.steps) {
      ArmSpec arm{"step_" + std::to_string(s), base};
      arm.cfg.steps = {s};
      arms.push_back(std::move(arm));
    }
    arms.push_back(ArmSpec{"step_all", base});
  } else if (grid == "mode") {
    // the no-negatives baseline: a zero push-away weight reduces training
    // to plain reconstruction regardless of where negatives come from, so
    // the cheapest source (the input itself) stands in
    ArmSpec none{"none", base};
    none.cfg.lambda = 0.0;
    none.cfg.mode = NegativeMode::Input;
    arms.push_back(std::move(none));

    ArmSpec fixed_random{"fixed_random", base};
    fixed_random.cfg.mode = NegativeMode::FixedRandom;
    arms.push_back(std::move(fixed_random));

    ArmSpec fixed_pretrained{"fixed_pretrained", base};
    fixed_pretrained.cfg.mode = NegativeMode::FixedPretrained;
    fixed_pretrained.cfg.pretrained_path =
        (out_dir / "none" / "final.ckpt").string();
    arms.push_back(std::move(fixed_pretrained));

    ArmSpec latency{"latency", base};
    latency.cfg.mode = NegativeMode::Latency;
    arms.push_back(std::move(latency));
  } else {
    throw ConfigError("unknown grid '" + grid +
                      "' (expected lambda, ema_w, step or mode)");
  }
  return arms;
}

struct ArmOutcome {
  RunStatus status = RunStatus::Completed;
  std::optional<double> final_psnr;
  std::optional<double> final_ssim;
};

ArmOutcome run_arm(const ArmSpec& arm, const std::string& config_path,
                   const fs::path& out_dir) {
  TrainReport report = run_into_dir(arm.cfg, config_path, out_dir / arm.name);
  ArmOutcome out;
  out.status = report.status;
  if (report.status == RunStatus::Completed && !report.records.empty()) {
    out.final_psnr = report.records.back().eval_psnr;
    out.final_ssim = report.records.back().eval_ssim;
  }
  return out;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      bad_line(lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key))
      bad_line(lineno, "bad key '" + key + "' (keys use a-z, _ and .)");
    apply_key(cfg, key, value, lineno);
  }
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

std::string dump_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "lambda = " << exact(cfg.lambda) << "\n";
  os << "ema_w = " << exact(cfg.ema_w) << "\n";
  os << "steps = ";
  for (std::size_t i = 0; i < cfg.steps.size(); ++i)
    os << (i ? "," : "") << cfg.steps[i];
  os << "\n";
  os << "mode = " << to_string(cfg.mode) << "\n";
  os << "loss = " << to_string(cfg.loss_kind) << "\n";
  os << "lr = " << exact(cfg.lr) << "\n";
  os << "total_iters = " << cfg.total_iters << "\n";
  os << "batch = " << cfg.batch << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "eval_every = " << cfg.eval_every << "\n";
  os << "pretrained = " << cfg.pretrained_path << "\n";
  os << "net.depth = " << cfg.net.depth << "\n";
  os << "net.width = " << cfg.net.width << "\n";
  os << "net.kernel = " << cfg.net.kernel << "\n";
  os << "net.in_channels = " << cfg.net.in_channels << "\n";
  os << "embed.taps = " << cfg.embed.taps << "\n";
  os << "embed.width = " << cfg.embed.width << "\n";
  os << "embed.in_channels = " << cfg.embed.in_channels << "\n";
  os << "embed.seed = " << cfg.embed.seed << "\n";
  os << "dataset.task = " << to_string(cfg.dataset.task) << "\n";
  os << "dataset.count = " << cfg.dataset.count << "\n";
  os << "dataset.size = " << cfg.dataset.size << "\n";
  os << "dataset.channels = " << cfg.dataset.channels << "\n";
  os << "dataset.seed = " << cfg.dataset.seed << "\n";
  os << "dataset.beta_min = " << exact(cfg.dataset.beta_min) << "\n";
  os << "dataset.beta_max = " << exact(cfg.dataset.beta_max) << "\n";
  os << "dataset.airlight_min = " << exact(cfg.dataset.airlight_min) << "\n";
  os << "dataset.airlight_max = " << exact(cfg.dataset.airlight_max) << "\n";
  os << "dataset.density_min = " << exact(cfg.dataset.density_min) << "\n";
  os << "dataset.density_max = " << exact(cfg.dataset.density_max) << "\n";
  os << "dataset.angle_min = " << exact(cfg.dataset.angle_min) << "\n";
  os << "dataset.angle_max = " << exact(cfg.dataset.angle_max) << "\n";
  os << "dataset.sigma_min = " << exact(cfg.dataset.sigma_min) << "\n";
  os << "dataset.sigma_max = " << exact(cfg.dataset.sigma_max) << "\n";
  return os.str();
}

std::string build_id() {
#ifdef MCL_BUILD_ID
  return MCL_BUILD_ID;
#else
  return "0.1.0-unknown";
#endif
}

std::vector<std::pair<std::string, ImagePair>> read_pair_dir(
    const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw IoError("not a directory: " + dir);
  std::vector<std::string> stems;
  std::vector<std::string> exts;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    for (const char* ext : {".pgm", ".ppm"}) {
      const std::string tail = std::string("_lq") + ext;
      if (name.size() > tail.size() &&
          name.compare(name.size() - tail.size(), tail.size(), tail) == 0) {
        stems.push_back(name.substr(0, name.size() - tail.size()));
        exts.push_back(ext);
      }
    }
  }
  std::vector<std::size_t> order(stems.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return stems[a] < stems[b];
  });

  std::vector<std::pair<std::string, ImagePair>> out;
  out.reserve(order.size());
  for (std::size_t i : order) {
    ImagePair pair;
    pair.lq = read_pnm((fs::path(dir) / (stems[i] + "_lq" + exts[i])).string());
    pair.hq = read_pnm((fs::path(dir) / (stems[i] + "_hq" + exts[i])).string());
    out.emplace_back(stems[i], std::move(pair));
  }
  return out;
}

void cmd_gen_data(const GenDataArgs& args) {
  if (args.out_dir.empty()) throw ConfigError("--out is required");
  DatasetSpec spec;
  spec.task = task_from_string(args.task);
  spec.count = args.count;
  spec.size = args.size;
  spec.seed = args.seed;
  spec.validate();
  const std::vector<ImagePair> pairs = make_dataset(spec);
  write_pair_files(pairs, args.out_dir, 0, pairs.size());
}

RunStatus cmd_train(const std::string& config_path,
                    const std::string& out_dir) {
  const TrainConfig cfg = parse_config_file(config_path);
  cfg.validate();
  const TrainReport report = run_into_dir(cfg, config_path, out_dir);

  // persist the held-out split so the checkpoint can be re-scored later
  const std::vector<ImagePair> pairs = make_dataset(cfg.dataset);
  const auto begin = static_cast<std::size_t>(
      train_pool_count(static_cast<long long>(pairs.size())));
  write_pair_files(pairs, fs::path(out_dir) / "eval_data", begin,
                   pairs.size());
  return report.status;
}

void cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
              std::ostream& out) {
  const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  const auto pairs = read_pair_dir(data_dir);
  if (pairs.empty()) throw IoError("no image pairs found in " + data_dir);

  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& [stem, pair] : pairs) {
    const auto [p, s] = eval_single(loaded.params, pair.lq, pair.hq);
    out << stem << " " << g9(p) << " " << g9(s) << "\n";
    psnr_sum += p;
    ssim_sum += s;
  }
  const double n = static_cast<double>(pairs.size());
  out << "mean " << g9(psnr_sum / n) << " " << g9(ssim_sum / n) << "\n";
}

void cmd_ablate(const std::string& grid, const std::string& config_path,
                const std::string& out_dir, bool parallel) {
  const TrainConfig base = parse_config_file(config_path);
  base.validate();
  const fs::path out(out_dir);
  const std::vector<ArmSpec> arms = build_arms(grid, base, out);

  std::vector<ArmOutcome> outcomes(arms.size());
  // the frozen-pretrained arm consumes the baseline arm's checkpoint, so
  // that arm always runs first and alone
  std::size_t first_parallel = 0;
  if (grid == "mode") {
    outcomes[0] = run_arm(arms[0], config_path, out);
    first_parallel = 1;
  }
  if (!parallel) {
    for (std::size_t i = first_parallel; i < arms.size(); ++i)
      outcomes[i] = run_arm(arms[i], config_path, out);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(arms.size());
    for (std::size_t i = first_parallel; i < arms.size(); ++i)
      workers.emplace_back([&, i] {
        try {
          outcomes[i] = run_arm(arms[i], config_path, out);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& w : workers) w.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::string summary = "arm,status,final_psnr,final_ssim\n";
  for (std::size_t i = 0; i < arms.size(); ++i) {
    summary += arms[i].name;
    summary += ',';
    summary += to_string(outcomes[i].status);
    summary += ',';
    if (outcomes[i].final_psnr) summary += g9(*outcomes[i].final_psnr);
    summary += ',';
    if (outcomes[i].final_ssim) summary += g9(*outcomes[i].final_ssim);
    summary += '\n';
  }
  write_text_file(out / "summary.csv", summary);
}

}  // namespace mcl
