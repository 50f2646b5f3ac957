#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mcl/train.hpp"

namespace mcl {

// Line-based configuration: `key = value`, one per line, `#` starts a
// comment, keys use [a-z_.]. Unknown keys, bad values and malformed lines
// are ConfigErrors naming the line number. Missing keys keep the
// TrainConfig field defaults.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

// Canonical full dump of a config, one line per key, doubles printed with
// just enough digits to round trip exactly: parse(dump(cfg)) == cfg.
std::string dump_config(const TrainConfig& cfg);

// Identifies the binary that produced an output directory.
std::string build_id();

// Loads pairNNNN_{lq,hq}.pgm/.ppm files from a directory, sorted by stem.
// The first element of each entry is the pair's stem ("pair0000").
std::vector<std::pair<std::string, ImagePair>> read_pair_dir(
    const std::string& dir);

struct GenDataArgs {
  std::string task = "sr2x";
  int count = 16;
  int size = 48;
  std::uint64_t seed = 1;
  std::string out_dir;
};

// Writes `count` degraded/clean pairs plus a manifest carrying every
// degradation parameter at full precision, so any pair can be re-derived
// from its clean image alone.
void cmd_gen_data(const GenDataArgs& args);

// Full training run: writes manifest.txt (before training), metrics.csv,
// final.ckpt and the held-out pairs under eval_data/. The return value is
// the run's termination status; the binary maps Collapsed to exit code 2.
RunStatus cmd_train(const std::string& config_path,
                    const std::string& out_dir);

// Prints one "<stem> <psnr> <ssim>" line per pair and a final
// "mean <psnr> <ssim>" line, nine significant digits.
void cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
              std::ostream& out);

// Runs one of the sweep grids (lambda, ema_w, step, mode) over the base
// config, one subdirectory per arm, and writes summary.csv with
// arm,status,final_psnr,final_ssim rows in grid order. With parallel set,
// independent arms run concurrently; outputs are byte-identical to a
// sequential run except for wall_ms columns.
void cmd_ablate(const std::string& grid, const std::string& config_path,
                const std::string& out_dir, bool parallel);

}  // namespace mcl
