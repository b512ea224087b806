#include "seqpatch/episode/episode.hpp"

#include "seqpatch/format.hpp"

#include <cmath>

namespace seqpatch {

ActionSource parse_action_source(const std::string& name) {
  if (name == "sample") return ActionSource::sample;
  if (name == "greedy") return ActionSource::greedy;
  if (name == "random") return ActionSource::random;
  if (name == "raster") return ActionSource::raster;
  if (name == "fixed_box") return ActionSource::fixed_box;
  throw std::invalid_argument("unknown action source '" + name + "' (expected sample, greedy, random, raster or fixed_box)");
}

std::string to_string(ActionSource source) {
  switch (source) {
    case ActionSource::sample: return "sample";
    case ActionSource::greedy: return "greedy";
    case ActionSource::random: return "random";
    case ActionSource::raster: return "raster";
    case ActionSource::fixed_box: return "fixed_box";
  }
  return "unknown";
}

std::pair<Index, Index> unit_box_ids(const PolicyGeometry& g) {
  const Index r = find_entry(g.ratios, 1.0), s = find_entry(g.scales, 1.0);
  if (r < 0 || s < 0) throw std::invalid_argument("fixed-size boxes need ratio 1 and scale 1 in the tables");
  return {r, s};
}

Action raster_action(const PolicyGeometry& g, Index t) {
  const Index z = std::max<Index>(1, static_cast<Index>(std::llround(g.box_base)));
  const Index rows = (g.image_h + z - 1) / z, cols = (g.image_w + z - 1) / z;
  const Index k = t % (rows * cols);
  const Index row = k / cols, col = k % cols;
  Action a;
  a.y = std::min(g.image_h, row * z + z / 2 + 1);
  a.x = std::min(g.image_w, col * z + z / 2 + 1);
  const Index r = find_entry(g.ratios, 1.0), s = find_entry(g.scales, 1.0);
  a.ratio_id = std::max<Index>(r, 0);
  a.scale_id = std::max<Index>(s, 0);
  a.box_h = std::min(z, g.image_h);
  a.box_w = std::min(z, g.image_w);
  return a;
}

void write_trajectory_csv(std::ostream& out, const EpisodeTrajectory& traj, double reward, double psnr_db,
                          double ssim_value) {
  out << "t,x,y,ratio_id,scale_id,Lh,Lw,logprob,step_loss\n";
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const StepRecord& s = traj.steps[i];
    out << i + 1 << ',' << s.action.x << ',' << s.action.y << ',' << s.action.ratio_id << ',' << s.action.scale_id
        << ',' << s.box.height << ',' << s.box.width << ',' << format_double(s.log_prob) << ','
        << format_double(s.step_loss) << '\n';
  }
  out << "reward,psnr,ssim,coverage\n"
      << format_double(reward) << ',' << format_double(psnr_db) << ',' << format_double(ssim_value) << ','
      << format_double(traj.coverage.fraction()) << '\n';
}

}  // namespace seqpatch
