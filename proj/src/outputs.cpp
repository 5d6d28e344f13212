#include "crl/experiment.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace crl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string run_stem(const std::string& arm, std::uint64_t seed) { return fmt::format("{}__seed{}", arm, seed); }

std::string run_csv(const RunLog& log) {
  std::string out = "step,reward,reset,rbar\n";
  for (const auto& r : log.records()) {
    out += fmt::format("{},{},{},", r.step, r.reward, r.resets);
    if (r.rbar) out += fmt::format("{}", *r.rbar);
    out += '\n';
  }
  return out;
}

std::string trace_csv(const RunLog& log) {
  std::string out = "step";
  const std::size_t dims = log.trace().empty() ? 0 : log.trace().front().size();
  for (std::size_t d = 0; d < dims; ++d) out += fmt::format(",s{}", d);
  out += '\n';
  for (std::size_t t = 0; t < log.trace().size(); ++t) {
    out += fmt::format("{}", t + 1);
    for (double v : log.trace()[t]) out += fmt::format(",{}", v);
    out += '\n';
  }
  return out;
}

double parse_double(const std::string& text, const fs::path& file) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    if (text == "nan" || text == "-nan") return std::nan("");
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    throw std::runtime_error("bad number '" + text + "' in " + file.string());
  }
}

RunLog parse_run_csv(const fs::path& file, long stride) {
  std::stringstream in(read_file(file));
  std::string line;
  std::getline(in, line);
  if (line != "step,reward,reset,rbar") {
    throw std::runtime_error("unexpected header in " + file.string());
  }
  std::vector<RunRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() == 3) cells.emplace_back();
    if (cells.size() != 4) throw std::runtime_error("malformed row '" + line + "' in " + file.string());
    RunRecord r;
    r.step = std::stol(cells[0]);
    r.reward = parse_double(cells[1], file);
    r.resets = std::stoi(cells[2]);
    if (!cells[3].empty()) r.rbar = parse_double(cells[3], file);
    records.push_back(r);
  }
  return RunLog::from_records(std::move(records), stride);
}

std::map<std::string, long> windows_of(const ExperimentConfig& config) {
  std::map<std::string, long> windows;
  for (const auto& arm : config.arms) windows[arm.name] = arm.settings.window;
  return windows;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

Curve arm_curve(const std::vector<const RunResult*>& runs, long window) {
  Curve curve;
  std::vector<const RunLog*> logs;
  for (const auto* r : runs) {
    if (!r->failed) logs.push_back(&r->log);
  }
  if (logs.empty()) return curve;
  const long stride = logs.front()->stride();
  long last = logs.front()->steps();
  for (const auto* log : logs) last = std::min(last, log->steps());
  const long first = ((window + stride - 1) / stride) * stride;
  std::vector<double> values(logs.size());
  for (long step = first; step <= last; step += stride) {
    for (std::size_t i = 0; i < logs.size(); ++i) values[i] = windowed_reward_rate_at(*logs[i], step, window);
    const SampleSummary s = summarize(values);
    curve.steps.push_back(step);
    curve.mean.push_back(s.mean);
    curve.std_error.push_back(s.std_error);
  }
  return curve;
}

std::string render_svg(const std::map<std::string, Curve>& curves, const std::string& title) {
  constexpr double width = 800, height = 480, left = 70, right = 180, top = 40, bottom = 50;
  static const std::vector<std::string> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const auto& [name, c] : curves) {
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
      x_min = std::min(x_min, static_cast<double>(c.steps[i]));
      x_max = std::max(x_max, static_cast<double>(c.steps[i]));
      y_min = std::min(y_min, c.mean[i] - c.std_error[i]);
      y_max = std::max(y_max, c.mean[i] + c.std_error[i]);
    }
  }
  if (!std::isfinite(x_min)) {
    x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * plot_w; };
  const auto py = [&](double y) { return top + (y_max - y) / (y_max - y_min) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{3}</text>\n",
      width, height, left + plot_w / 2, title);
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left,
                     top, plot_w, plot_h);
  for (int i = 0; i <= 5; ++i) {
    const double y = y_min + (y_max - y_min) * i / 5.0;
    const double x = x_min + (x_max - x_min) * i / 5.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", left - 6, py(y) + 4, y);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.0f}</text>\n", px(x),
                       top + plot_h + 18, x);
  }
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">step</text>\n", left + plot_w / 2,
                     height - 10);
  svg += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">reward rate</text>\n",
      top + plot_h / 2, top + plot_h / 2);

  std::size_t k = 0;
  for (const auto& [name, c] : curves) {
    const std::string& color = palette[k % palette.size()];
    if (!c.steps.empty()) {
      std::string band, line;
      for (std::size_t i = 0; i < c.steps.size(); ++i) {
        band += fmt::format("{:.2f},{:.2f} ", px(static_cast<double>(c.steps[i])), py(c.mean[i] + c.std_error[i]));
        line += fmt::format("{:.2f},{:.2f} ", px(static_cast<double>(c.steps[i])), py(c.mean[i]));
      }
      for (std::size_t i = c.steps.size(); i-- > 0;) {
        band += fmt::format("{:.2f},{:.2f} ", px(static_cast<double>(c.steps[i])), py(c.mean[i] - c.std_error[i]));
      }
      svg += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", band, color);
      svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", line, color);
    }
    const double ly = top + 14 + 18 * static_cast<double>(k);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"3\"/>\n",
                       left + plot_w + 12, ly, left + plot_w + 32, color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", left + plot_w + 38, ly + 4, name);
    ++k;
  }
  svg += "</svg>\n";
  return svg;
}

std::string summary_json(const ExperimentConfig& config, const std::vector<ArmSummary>& arms,
                         const std::vector<ComparisonReport>& reports, const std::string& hash) {
  json root;
  root["name"] = config.name;
  root["config_hash"] = hash;
  root["arms"] = json::array();
  for (const auto& a : arms) {
    root["arms"].push_back({{"name", a.name},
                            {"seeds", a.seeds},
                            {"finals", a.finals},
                            {"mean", number_or_null(a.final_rate.mean)},
                            {"stderr", number_or_null(a.final_rate.std_error)},
                            {"failures", a.failures}});
  }
  root["comparisons"] = json::array();
  for (const auto& r : reports) {
    json c;
    c["arms"] = {{"candidate", r.arms.candidate}, {"reference", r.arms.reference}, {"baseline", r.arms.baseline}};
    c["means"] = {{"candidate", r.candidate.mean}, {"reference", r.reference.mean}, {"baseline", r.baseline.mean}};
    c["stderrs"] = {{"candidate", r.candidate.std_error},
                    {"reference", r.reference.std_error},
                    {"baseline", r.baseline.std_error}};
    c["pct_improvement"] = r.improvement.applicable ? number_or_null(100.0 * r.improvement.value) : json("N/A");
    c["t"] = number_or_null(r.welch.t);
    c["df"] = number_or_null(r.welch.df);
    c["p_value"] = number_or_null(r.welch.p);
    c["significant"] = r.significant;
    root["comparisons"].push_back(c);
  }
  return root.dump(2) + "\n";
}

void emit_outputs(const ExperimentConfig& config, const SweepResult& sweep, const fs::path& out_dir) {
  fs::create_directories(out_dir / "runs");
  fs::create_directories(out_dir / "curves");
  write_file(out_dir / "config.yaml", emit_config(config));

  json manifest = json::array();
  for (const auto& run : sweep.runs) {
    const std::string stem = run_stem(run.arm, run.seed);
    write_file(out_dir / "runs" / (stem + ".csv"), run_csv(run.log));
    if (!run.log.trace().empty()) {
      fs::create_directories(out_dir / "traces");
      write_file(out_dir / "traces" / (stem + ".csv"), trace_csv(run.log));
    }
    manifest.push_back({{"arm", run.arm},
                        {"seed", run.seed},
                        {"file", stem + ".csv"},
                        {"stride", run.log.stride()},
                        {"failed", run.failed},
                        {"failure_step", run.failure_step},
                        {"failure_message", run.failure_message}});
  }
  write_file(out_dir / "runs" / "manifest.json",
             json{{"config_hash", sweep.config_hash}, {"runs", manifest}}.dump(2) + "\n");

  const auto windows = windows_of(config);
  const auto arms = summarize_arms(sweep, windows);
  std::vector<ComparisonReport> reports;
  try {
    reports = aggregate(arms, config.comparisons);
  } catch (const std::domain_error& e) {
    throw std::runtime_error(std::string("cannot aggregate: ") + e.what());
  }
  write_file(out_dir / "summary.json", summary_json(config, arms, reports, sweep.config_hash));

  std::map<std::string, Curve> curves;
  for (const auto& arm : arms) {
    Curve c = arm_curve(sweep.runs_for(arm.name), windows.at(arm.name));
    std::string text = "step,mean,stderr\n";
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
      text += fmt::format("{},{},{}\n", c.steps[i], c.mean[i], c.std_error[i]);
    }
    write_file(out_dir / "curves" / (arm.name + ".csv"), text);
    if (!c.steps.empty()) curves.emplace(arm.name, std::move(c));
  }
  if (!curves.empty()) {
    write_file(out_dir / "reward_rate.svg", render_svg(curves, config.name));
  }
}

LoadedSweep load_sweep(const fs::path& dir) {
  LoadedSweep loaded;
  loaded.config = parse_config(dir / "config.yaml");
  const json manifest = json::parse(read_file(dir / "runs" / "manifest.json"));
  loaded.sweep.config_hash = manifest.at("config_hash").get<std::string>();
  for (const auto& entry : manifest.at("runs")) {
    RunResult r{entry.at("arm").get<std::string>(), entry.at("seed").get<std::uint64_t>(),
                parse_run_csv(dir / "runs" / entry.at("file").get<std::string>(), entry.at("stride").get<long>()),
                entry.at("failed").get<bool>(), entry.at("failure_step").get<long>(),
                entry.at("failure_message").get<std::string>()};
    r.log.seed = r.seed;
    r.log.config_hash = loaded.sweep.config_hash;
    loaded.sweep.runs.push_back(std::move(r));
  }
  return loaded;
}

}  // namespace crl
