// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/sweep.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <thread>

#include "semmix/error.hpp"

namespace semmix {

std::string_view to_string(SweepParam param) {
  switch (param) {
    case SweepParam::kNu: return "nu";
    case SweepParam::kKMin: return "kmin";
    case SweepParam::kKMax: return "kmax";
    case SweepParam::kScale: return "s";
  }
  return "?";
}

SweepParam sweep_param_from_string(std::string_view name) {
  if (name == "nu") return SweepParam::kNu;
  if (name == "kmin") return SweepParam::kKMin;
  if (name == "kmax") return SweepParam::kKMax;
  if (name == "s") return SweepParam::kScale;
  throw_invalid("unknown sweep axis '" + std::string(name) + "'");
}

namespace {

double parse_number(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw_invalid("'" + std::string(text) + "' is not a number");
  }
  return v;
}

// Trims accumulation noise such as 0.30000000000000004.
double tidy(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  double out = v;
  std::from_chars(buf, res.ptr, out);
  return out;
}

}  // namespace

std::vector<double> parse_sweep_values(std::string_view text) {
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t pos = 0;
    while (true) {
      const auto next = text.find(':', pos);
      parts.push_back(parse_number(text.substr(pos, next == std::string_view::npos ? next : next - pos)));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    if (parts.size() != 3) throw_invalid("range must be lo:hi:step");
    const double lo = parts[0], hi = parts[1], step = parts[2];
    if (!(step > 0.0) || hi < lo) throw_invalid("range needs lo <= hi and step > 0");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    if (n > 10000) throw_invalid("range has too many values");
    for (std::size_t i = 0; i < n; ++i) out.push_back(tidy(lo + static_cast<double>(i) * step));
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto next = text.find(',', pos);
      out.push_back(parse_number(text.substr(pos, next == std::string_view::npos ? next : next - pos)));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
  }
  return out;
}

std::size_t SweepResult::rows() const {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < axes.size(); ++i) r *= axes[i].values.size();
  return r;
}

std::size_t SweepResult::columns() const {
  return axes.empty() ? 1 : axes.back().values.size();
}

std::pair<MixConfig, Prompt> sweep_cell_config(const MixConfig& base, const Prompt& content,
                                               const std::vector<SweepAxis>& axes,
                                               const std::vector<std::size_t>& coords,
                                               std::size_t index) {
  MixConfig cfg = base;
  Prompt prompt = content;
  cfg.seed = base.seed + index;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const double v = axes[a].values.at(coords[a]);
    switch (axes[a].param) {
      case SweepParam::kNu: cfg.nu = v; break;
      case SweepParam::kKMin: cfg.kmin = v; break;
      case SweepParam::kKMax: cfg.kmax = v; break;
      case SweepParam::kScale:
        if (v < kMinTokenScale || v > kMaxTokenScale) throw_invalid("token scale outside [-2, 2]");
        prompt = with_target_scale(content, v);
        break;
    }
  }
  cfg.validate();
  return {cfg, prompt};
}

MixResult run_single_mix(const Denoiser& model, const LayoutSource& layout, const Prompt& content,
                         const MixConfig& cfg, bool record) {
  std::vector<Rng> rngs{make_rng(cfg.seed, 0)};
  if (layout.image.has_value() == layout.prompt.has_value()) {
    throw_invalid("layout source needs exactly one of an image or a prompt");
  }
  if (layout.image) {
    if (layout.image->count() != 1) throw_invalid("layout image must be a single sample");
    return mix_image_text(model, *layout.image, content, cfg, rngs, record);
  }
  return mix_text_text(model, *layout.prompt, content, cfg, rngs, record);
}

SweepResult sweep(const Denoiser& model, const LayoutSource& layout, const Prompt& content,
                  const MixConfig& base, const std::vector<SweepAxis>& axes, int workers) {
  if (axes.empty()) throw_invalid("sweep grid has no axes");
  std::size_t total = 1;
  for (const auto& ax : axes) {
    if (ax.values.empty()) throw_invalid("sweep axis '" + std::string(to_string(ax.param)) + "' is empty");
    total *= ax.values.size();
  }
  if (workers < 1) throw_invalid("workers must be >= 1");

  SweepResult out;
  out.axes = axes;
  out.cells.resize(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    auto& cell = out.cells[idx];
    cell.index = idx;
    cell.coords.resize(axes.size());
    std::size_t rem = idx;
    for (std::size_t a = axes.size(); a-- > 0;) {
      cell.coords[a] = rem % axes[a].values.size();
      rem /= axes[a].values.size();
    }
    std::tie(cell.config, cell.content) = sweep_cell_config(base, content, axes, cell.coords, idx);
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(total);
  auto work = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        out.cells[i].result = run_single_mix(model, layout, out.cells[i].content, out.cells[i].config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), total);
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace semmix
