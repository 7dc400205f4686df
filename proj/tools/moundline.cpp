// moundline: command-line front end for the mound-site detection pipeline.

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moundline/catalog.hpp"
#include "moundline/config.hpp"
#include "moundline/error.hpp"
#include "moundline/evals.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/io/imagery.hpp"
#include "moundline/io/raster_io.hpp"
#include "moundline/model.hpp"
#include "moundline/mosaic.hpp"
#include "moundline/postproc.hpp"
#include "moundline/service/run_store.hpp"
#include "moundline/service/server.hpp"
#include "moundline/synth.hpp"
#include "moundline/tiles.hpp"

namespace fs = std::filesystem;
using moundline::Error;
using moundline::ErrorCode;
using moundline::io::json;
namespace ml = moundline;

namespace {

std::optional<std::string> find_flag_value(int argc, char** argv, const std::string& flag) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == flag && i + 1 < argc) return std::string(argv[i + 1]);
    if (a.rfind(flag + "=", 0) == 0) return a.substr(flag.size() + 1);
  }
  return std::nullopt;
}

template <class T>
std::vector<T> parse_list(const std::string& s, const std::string& what) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) throw Error(ErrorCode::Parse, "bad " + what + " value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

std::map<std::string, ml::catalog::Split> read_split_map(const fs::path& p) {
  std::map<std::string, ml::catalog::Split> out;
  for (const auto& row : ml::io::read_jsonl(p)) {
    out[row.at("id").get<std::string>()] = ml::catalog::split_from_string(row.at("split").get<std::string>());
  }
  return out;
}

std::map<std::string, ml::ProbRaster> read_prob_dir(const fs::path& dir) {
  std::map<std::string, ml::ProbRaster> out;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::InvalidArgument, "not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".f32") continue;
    const fs::path base = e.path().parent_path() / e.path().stem();
    out.emplace(base.filename().string(), ml::io::read_prob_raster(base));
  }
  return out;
}

std::unique_ptr<ml::model::Segmenter> load_segmenter(const std::string& model, const std::string& external) {
  if (!model.empty() == !external.empty()) {
    throw Error(ErrorCode::InvalidArgument, "give exactly one of --model or --external");
  }
  if (!external.empty()) return std::make_unique<ml::model::ExternalRasterSegmenter>(external);
  return std::make_unique<ml::model::BaselineSegmenter>(ml::model::checkpoint_from_json(ml::io::read_json(model)));
}

ml::BBox parse_extent(const std::string& s) {
  const auto v = parse_list<double>(s, "extent");
  if (v.size() != 4) throw Error(ErrorCode::Parse, "--extent needs minx,miny,maxx,maxy");
  const ml::BBox b{v[0], v[1], v[2], v[3]};
  if (b.empty()) throw Error(ErrorCode::InvalidArgument, "--extent is empty");
  return b;
}

struct Options {
  ml::RunConfig cfg;
  bool json_errors = false;
  std::string config_path;

  // shared paths
  std::string sites, negatives, out, tiles_dir, model, external, probs, imagery, splits, ledger, run_id, data_dir;

  // curate
  std::vector<std::string> categories, preservation;
  double test_frac = 0.1, val_frac = 0.1;
  std::optional<std::size_t> expected_total;

  // tile
  bool skip_out_of_bounds = false;

  // predict / evaluate
  std::string split_filter = "all";
  bool write_png = false;
  std::string counts;
  std::string label = "Model";
  bool csv = false;
  bool iou = false;
  int passes = 10;
  int crop = 0;
  std::string report;

  // mosaic
  std::string extent, ramp = "heat", weighting = "uniform", prob_out;
  double mosaic_ppm = 0;

  // synth
  int scenes = 0, synth_test = -1, synth_val = 0, max_mounds = 3;
  double scene_size_m = 256;
  std::optional<int> crs;

  // serve
  int port = 8080;
  std::string host = "127.0.0.1";

  // train
  std::string radii;
  std::string loss;
  bool no_augment = false;
};

// ---------------------------------------------------------------------------

int cmd_curate(Options& o) {
  auto sites = ml::catalog::read_sites(o.sites);
  if (!o.categories.empty() || !o.preservation.empty()) {
    sites = ml::catalog::select_by_labels(sites, {o.categories.begin(), o.categories.end()},
                                          {o.preservation.begin(), o.preservation.end()});
  }
  const auto result = ml::catalog::curate(sites, o.cfg.curation);
  std::vector<ml::catalog::NegativeRegion> negatives;
  if (!o.negatives.empty()) negatives = ml::catalog::read_negatives(o.negatives);

  const fs::path out = o.out;
  ml::io::FeatureCollection fc;
  for (const auto& s : result.kept) fc.features.push_back(ml::catalog::site_to_feature(s));
  ml::io::write_geojson(out / "curated.geojson", fc);

  ml::catalog::CurationReportOptions ropt;
  ropt.negatives = negatives.size();
  ropt.expected_total_images = o.expected_total;
  const json report = ml::catalog::curation_report(result, ropt);
  ml::io::write_json(out / "curation_report.json", report);

  std::vector<std::string> kept_ids, neg_ids;
  for (const auto& s : result.kept) kept_ids.push_back(s.id);
  for (const auto& n : negatives) neg_ids.push_back(n.id);
  std::vector<json> rows;
  for (const auto& a : ml::catalog::make_splits(kept_ids, neg_ids, o.test_frac, o.val_frac, o.cfg.seed)) {
    rows.push_back(ml::catalog::splits_jsonl_row(a));
  }
  ml::io::write_jsonl(out / "splits.jsonl", rows);
  std::cout << report["totals"].dump() << "\n";
  return 0;
}

int cmd_tile(Options& o) {
  auto imagery = ml::io::ImageryStore::open(o.imagery);
  const auto sites = ml::catalog::read_sites(o.sites);
  std::vector<ml::catalog::NegativeRegion> negatives;
  if (!o.negatives.empty()) negatives = ml::catalog::read_negatives(o.negatives);
  std::map<std::string, ml::catalog::Split> splits;
  if (!o.splits.empty()) splits = read_split_map(o.splits);
  const auto& tp = o.cfg.tiles;
  std::vector<ml::Polygon> all_shapes;
  for (const auto& s : sites) all_shapes.push_back(s.shape);

  struct Job {
    std::string id;
    ml::Point center;
  };
  std::vector<Job> jobs;
  for (const auto& s : sites) jobs.push_back({s.id, ml::centroid(s.shape)});
  for (const auto& n : negatives) jobs.push_back({n.id, ml::centroid(n.shape)});

  int written = 0, skipped = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    ml::tiles::Tile t;
    try {
      t.image = imagery.window(jobs[i].center, tp.side_m, tp.ppm, true);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::OutOfBounds && o.skip_out_of_bounds) {
        std::cerr << "skip " << jobs[i].id << ": " << e.what() << "\n";
        ++skipped;
        continue;
      }
      throw;
    }
    t.mask = ml::tiles::rasterize_mask(all_shapes, t.image.transform, t.image.width, t.image.height);
    t.source_id = jobs[i].id;
    if (tp.crop) t = ml::tiles::random_crop(t, t.image.width / 2, ml::mix_seed(o.cfg.seed, i));
    if (tp.downscale) t = ml::tiles::downscale_half(t);
    auto it = splits.find(jobs[i].id);
    ml::tiles::write_tile(o.out, safe_name(jobs[i].id), t, it == splits.end() ? ml::catalog::Split::train : it->second);
    ++written;
  }
  std::cout << json{{"tiles", written}, {"skipped", skipped}}.dump() << "\n";
  return 0;
}

std::vector<ml::tiles::Tile> tiles_of(const std::vector<ml::tiles::StoredTile>& all, ml::catalog::Split s) {
  std::vector<ml::tiles::Tile> out;
  for (const auto& t : all) {
    if (t.split == s) out.push_back(t.tile);
  }
  return out;
}

int cmd_train(Options& o) {
  auto& spec = o.cfg.segmenter;
  if (!o.radii.empty()) spec.feature_radii = parse_list<int>(o.radii, "radius");
  if (!o.loss.empty()) spec.loss = ml::model::loss_from_string(o.loss);
  if (o.no_augment) spec.augment = false;
  spec.validate();
  const auto all = ml::tiles::read_tile_dir(o.tiles_dir);
  const auto train = tiles_of(all, ml::catalog::Split::train);
  const auto val = tiles_of(all, ml::catalog::Split::val);
  const auto m = ml::model::train_baseline(train, val, spec);
  ml::io::write_json(o.out, ml::model::checkpoint_to_json(m));
  for (std::size_t e = 0; e < m.history.size(); ++e) {
    json row = {{"epoch", e + 1}, {"train_loss", m.history[e].train}};
    if (m.history[e].has_val) row["val_loss"] = m.history[e].val;
    std::cout << row.dump() << "\n";
  }
  return 0;
}

int cmd_predict(Options& o) {
  const auto seg = load_segmenter(o.model, o.external);
  const auto all = ml::tiles::read_tile_dir(o.tiles_dir);
  int n = 0;
  for (const auto& t : all) {
    if (o.split_filter != "all" && ml::catalog::to_string(t.split) != o.split_filter) continue;
    ml::ProbRaster p = seg->predict(t.tile.image, t.name);
    p.transform = t.tile.image.transform;
    ml::io::write_prob_raster(fs::path(o.out) / t.name, p);
    if (o.write_png) ml::io::write_prob_png(fs::path(o.out) / (t.name + ".png"), p);
    ++n;
  }
  std::cout << json{{"predictions", n}}.dump() << "\n";
  return 0;
}

int cmd_vectorize(Options& o) {
  std::vector<ml::postproc::CandidateShape> all;
  for (const auto& [name, r] : read_prob_dir(o.probs)) {
    auto c = ml::postproc::extract_candidates(r, o.cfg.postproc.params, name);
    all.insert(all.end(), c.begin(), c.end());
  }
  ml::io::write_geojson(o.out, ml::postproc::candidates_to_collection(all, o.crs));
  std::cout << json{{"candidates", all.size()}}.dump() << "\n";
  return 0;
}

int cmd_evaluate(Options& o) {
  const int modes = (!o.counts.empty()) + (!o.probs.empty()) + (o.iou ? 1 : 0);
  if (modes != 1) throw Error(ErrorCode::InvalidArgument, "give exactly one of --counts, --probs or --iou");

  if (!o.counts.empty()) {
    const auto v = parse_list<long long>(o.counts, "count");
    if (v.size() != 4) throw Error(ErrorCode::Parse, "--counts needs tp,tn,fp,fn");
    for (long long x : v) {
      if (x < 0) throw Error(ErrorCode::InvalidArgument, "counts must be >= 0");
    }
    ml::evals::ConfusionCounts c;
    c.tp = v[0];
    c.tn = v[1];
    c.fp = v[2];
    c.fn = v[3];
    std::vector<ml::evals::TableRow> rows{{o.label, "Automatic", c}};
    if (!o.ledger.empty()) {
      std::vector<ml::evals::AdjustmentRecord> ledger;
      for (const auto& j : ml::io::read_jsonl(o.ledger)) ledger.push_back(ml::evals::adjustment_from_json(j));
      rows.push_back({o.label, "Adjusted", ml::evals::apply_adjustments(c, ledger)});
    }
    std::cout << ml::evals::render_table(rows, o.csv);
    return 0;
  }

  if (o.iou) {
    const auto seg = load_segmenter(o.model, o.external);
    const auto test = tiles_of(ml::tiles::read_tile_dir(o.tiles_dir), ml::catalog::Split::test);
    ml::evals::RepeatedIouOptions opt;
    opt.passes = o.passes;
    opt.seed = o.cfg.seed;
    opt.crop_side = o.crop;
    opt.threshold = o.cfg.postproc.params.threshold;
    const auto r = ml::evals::repeated_iou(test, *seg, opt);
    const json log = ml::evals::repeated_iou_log(r);
    if (!o.report.empty()) ml::io::write_json(o.report, log);
    char buf[64];
    std::snprintf(buf, sizeof buf, "IoU %.4f +/- %.4f", r.mean, r.std);
    std::cout << buf << "\n";
    return 0;
  }

  if (o.sites.empty()) throw Error(ErrorCode::InvalidArgument, "--probs needs --sites");
  const auto probs = read_prob_dir(o.probs);
  const auto sites = ml::service::read_known_sites(o.sites);
  ml::RunConfig cfg = o.cfg;
  if (!o.run_id.empty()) cfg.id = o.run_id;
  if (cfg.id.empty()) cfg.id = "run";
  cfg.inputs["probs"] = fs::absolute(o.probs).string();
  cfg.inputs["sites"] = fs::absolute(o.sites).string();
  const fs::path root = o.data_dir.empty() ? ml::service::data_root() : fs::path(o.data_dir);
  const fs::path dir = ml::service::create_run(root, cfg, probs, sites, nullptr, true);
  const json report = ml::io::read_json(dir / "report.json");
  if (!o.report.empty()) ml::io::write_json(o.report, report);
  ml::evals::ConfusionCounts c;
  c.tp = report["counts"]["tp"];
  c.tn = report["counts"]["tn"];
  c.fp = report["counts"]["fp"];
  c.fn = report["counts"]["fn"];
  std::cout << ml::evals::render_table({{cfg.id, "Automatic", c}}, o.csv);
  std::cerr << "run written to " << dir.string() << "\n";
  return 0;
}

int cmd_mosaic(Options& o) {
  const auto seg = load_segmenter(o.model, o.external);
  auto imagery = ml::io::ImageryStore::open(o.imagery);
  ml::mosaic::RegionSweep sweep;
  sweep.extent = parse_extent(o.extent);
  sweep.tile_side = o.cfg.sweep.tile;
  sweep.stride = o.cfg.sweep.stride;
  sweep.ppm = o.mosaic_ppm > 0 ? o.mosaic_ppm : o.cfg.tiles.ppm;
  const auto weighting = o.weighting == "cosine"    ? ml::mosaic::Weighting::cosine
                         : o.weighting == "uniform" ? ml::mosaic::Weighting::uniform
                                                    : throw Error(ErrorCode::Parse, "unknown weighting '" + o.weighting + "'");
  const auto ramp = ml::mosaic::ramp_from_string(o.ramp);

  const auto windows = ml::mosaic::plan_sweep(sweep);
  std::vector<ml::ProbRaster> preds;
  for (const auto& w : windows) {
    const ml::RgbImage img = imagery.render(w.transform, w.side, w.side, false);
    ml::ProbRaster p = seg->predict(img, "w" + std::to_string(w.col) + "_" + std::to_string(w.row));
    p.transform = w.transform;
    preds.push_back(std::move(p));
  }
  const ml::ProbRaster stitched = ml::mosaic::stitch(preds, sweep.extent, sweep.ppm, weighting);
  ml::mosaic::write_heatmap(o.out, stitched, ramp);
  if (!o.prob_out.empty()) ml::io::write_prob_raster(o.prob_out, stitched);

  if (!o.run_id.empty()) {
    ml::RunConfig cfg = o.cfg;
    cfg.id = o.run_id;
    cfg.inputs["imagery"] = fs::absolute(o.imagery).string();
    std::vector<ml::service::KnownSite> known;
    if (!o.sites.empty()) {
      cfg.inputs["sites"] = fs::absolute(o.sites).string();
      for (auto s : ml::service::read_known_sites(o.sites)) {
        if (ml::bbox(s.shape).overlaps(sweep.extent)) {
          s.image_id = "region";
          known.push_back(std::move(s));
        }
      }
    }
    const fs::path root = o.data_dir.empty() ? ml::service::data_root() : fs::path(o.data_dir);
    ml::service::create_run(root, cfg, {{"region", stitched}}, known, &stitched, true);
  }
  std::cout << json{{"windows", windows.size()}, {"width", stitched.width}, {"height", stitched.height}}.dump() << "\n";
  return 0;
}

int cmd_synth(Options& o) {
  ml::synth::DatasetSpec ds;
  ds.scenes = o.scenes;
  ds.test = o.synth_test >= 0 ? o.synth_test : o.scenes / 6;
  ds.val = o.synth_val;
  ds.seed = o.cfg.seed;
  ds.max_mounds = o.max_mounds;
  ds.scene.width_m = ds.scene.height_m = o.scene_size_m;
  ds.spacing_m = std::max(1000.0, 4 * o.scene_size_m);
  const auto entries = ml::synth::generate_dataset(ds);
  ml::synth::write_dataset(o.out, entries, o.crs);
  std::cout << json{{"scenes", entries.size()}, {"test", ds.test}, {"val", ds.val}}.dump() << "\n";
  return 0;
}

int cmd_serve(Options& o) {
  const fs::path root = o.data_dir.empty() ? ml::service::data_root() : fs::path(o.data_dir);
  ml::service::RunRegistry runs(root);
  httplib::Server server;
  ml::service::mount(server, runs);
  std::cerr << "serving " << root.string() << " on http://" << o.host << ":" << o.port << "\n";
  if (!server.listen(o.host, o.port)) throw Error(ErrorCode::Io, "cannot listen on " + o.host + ":" + std::to_string(o.port));
  return 0;
}

// ---------------------------------------------------------------------------

void report_error(const Options& o, const std::string& code, const std::string& msg, int exit_code) {
  if (o.json_errors) {
    std::cerr << json{{"v", 1}, {"error", {{"code", code}, {"message", msg}, {"exit", exit_code}}}}.dump() << "\n";
  } else {
    std::cerr << "error: " << msg << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  o.json_errors = std::any_of(argv + 1, argv + argc, [](const char* a) { return std::strcmp(a, "--json-errors") == 0; });

  try {
    if (auto cfg = find_flag_value(argc, argv, "--config")) {
      o.cfg = ml::run_config_from_json(ml::io::read_json(*cfg));
    }
  } catch (const Error& e) {
    report_error(o, std::string(ml::to_string(e.code())), e.what(), 2);
    return 2;
  }

  CLI::App app{"moundline: mound-site detection pipeline"};
  app.require_subcommand(1);
  app.add_flag("--json-errors", o.json_errors, "Machine-readable errors on stderr");
  app.add_option("--config", o.config_path, "RunConfig JSON supplying defaults");

  auto& cfg = o.cfg;

  auto* curate = app.add_subcommand("curate", "Filter a site catalog and assign splits");
  curate->add_option("--sites", o.sites, "Site catalog (GeoJSON)")->required();
  curate->add_option("--negatives", o.negatives, "Negative regions (GeoJSON)");
  curate->add_option("--out", o.out, "Output directory")->required();
  curate->add_option("--top-k", cfg.curation.top_k, "Drop the k largest sites")->capture_default_str();
  curate->add_option("--min-area", cfg.curation.min_area, "Minimum site area, m^2")->capture_default_str();
  curate->add_option("--window-side", cfg.curation.window_side, "Input window side, m")->capture_default_str();
  curate->add_option("--categories", o.categories, "Keep only these categories")->delimiter(',');
  curate->add_option("--preservation", o.preservation, "Keep only these preservation labels")->delimiter(',');
  curate->add_option("--test-frac", o.test_frac)->capture_default_str();
  curate->add_option("--val-frac", o.val_frac, "Validation share of the non-test remainder")->capture_default_str();
  curate->add_option("--expected-total", o.expected_total, "Image total to reconcile against");
  curate->add_option("--seed", cfg.seed)->capture_default_str();

  auto* tile = app.add_subcommand("tile", "Cut training tiles around sites and negatives");
  tile->add_option("--imagery", o.imagery, "Imagery manifest (JSON) or one georeferenced PNG")->required();
  tile->add_option("--sites", o.sites, "Curated sites (GeoJSON)")->required();
  tile->add_option("--negatives", o.negatives, "Negative regions (GeoJSON)");
  tile->add_option("--splits", o.splits, "splits.jsonl from curate");
  tile->add_option("--out", o.out, "Tile directory")->required();
  tile->add_option("--side-m", cfg.tiles.side_m, "Window side, m")->capture_default_str();
  tile->add_option("--ppm", cfg.tiles.ppm, "Pixels per meter")->capture_default_str();
  tile->add_flag("--crop,!--no-crop", cfg.tiles.crop, "Random crop to half the window side");
  tile->add_flag("--downscale,!--no-downscale", cfg.tiles.downscale, "Halve the resolution");
  tile->add_flag("--skip-out-of-bounds", o.skip_out_of_bounds, "Skip windows leaving the imagery");
  tile->add_option("--seed", cfg.seed)->capture_default_str();

  auto* train = app.add_subcommand("train", "Train the baseline segmenter");
  train->add_option("--tiles", o.tiles_dir, "Tile directory")->required();
  train->add_option("--out", o.out, "Checkpoint (JSON)")->required();
  train->add_option("--epochs", cfg.segmenter.epochs)->capture_default_str();
  train->add_option("--lr", cfg.segmenter.learning_rate)->capture_default_str();
  train->add_option("--loss", o.loss, "focal or dice");
  train->add_option("--gamma", cfg.segmenter.focal_gamma)->capture_default_str();
  train->add_option("--alpha", cfg.segmenter.focal_alpha)->capture_default_str();
  train->add_option("--radii", o.radii, "Feature window radii, e.g. 2,8,24");
  train->add_option("--batch-pixels", cfg.segmenter.batch_pixels)->capture_default_str();
  train->add_flag("--no-augment", o.no_augment);
  train->add_option("--seed", cfg.segmenter.seed)->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Write probability rasters for tiles");
  predict->add_option("--model", o.model, "Baseline checkpoint");
  predict->add_option("--external", o.external, "Directory of externally produced rasters");
  predict->add_option("--tiles", o.tiles_dir, "Tile directory")->required();
  predict->add_option("--split", o.split_filter, "all, train, val or test")->capture_default_str();
  predict->add_option("--out", o.out, "Output directory")->required();
  predict->add_flag("--png", o.write_png, "Also write 8-bit previews");

  auto* vectorize = app.add_subcommand("vectorize", "Blur, threshold and polygonize probability rasters");
  vectorize->add_option("--probs", o.probs, "Directory of probability rasters")->required();
  vectorize->add_option("--out", o.out, "Candidates (GeoJSON)")->required();
  vectorize->add_option("--sigma", cfg.postproc.params.sigma)->capture_default_str();
  vectorize->add_option("--threshold", cfg.postproc.params.threshold)->capture_default_str();
  vectorize->add_option("--min-area", cfg.postproc.params.min_area)->capture_default_str();
  vectorize->add_option("--buffer", cfg.postproc.params.buffer_m)->capture_default_str();
  vectorize->add_option("--simplify", cfg.postproc.params.simplify_tolerance)->capture_default_str();
  vectorize->add_option("--crs", o.crs, "EPSG code recorded in the output");

  auto* evaluate = app.add_subcommand("evaluate", "Detection metrics, repeated IoU, or a review run");
  evaluate->add_option("--counts", o.counts, "tp,tn,fp,fn");
  evaluate->add_option("--ledger", o.ledger, "Adjustment ledger (JSONL) applied to --counts");
  evaluate->add_option("--label", o.label)->capture_default_str();
  evaluate->add_flag("--csv", o.csv);
  evaluate->add_option("--probs", o.probs, "Probability rasters to score against --sites");
  evaluate->add_option("--sites", o.sites, "Ground truth (GeoJSON, image_id per feature)");
  evaluate->add_option("--run-id", o.run_id, "Run directory name under the data root");
  evaluate->add_option("--data-dir", o.data_dir, "Run root (default $MOUNDLINE_DATA_DIR)");
  evaluate->add_option("--sigma", cfg.postproc.params.sigma)->capture_default_str();
  evaluate->add_option("--threshold", cfg.postproc.params.threshold)->capture_default_str();
  evaluate->add_option("--min-area", cfg.postproc.params.min_area)->capture_default_str();
  evaluate->add_option("--min-intersection", cfg.postproc.min_intersection)->capture_default_str();
  evaluate->add_flag("--iou", o.iou, "Repeated-crop IoU on the test tiles");
  evaluate->add_option("--model", o.model);
  evaluate->add_option("--external", o.external);
  evaluate->add_option("--tiles", o.tiles_dir);
  evaluate->add_option("--passes", o.passes)->capture_default_str();
  evaluate->add_option("--crop", o.crop, "Crop side per pass; 0 evaluates whole tiles")->capture_default_str();
  evaluate->add_option("--seed", cfg.seed)->capture_default_str();
  evaluate->add_option("--report", o.report, "Also write the JSON report here");

  auto* mosaic = app.add_subcommand("mosaic", "Sweep a region and stitch a heatmap");
  mosaic->add_option("--imagery", o.imagery, "Imagery manifest (JSON) or one georeferenced PNG")->required();
  mosaic->add_option("--model", o.model);
  mosaic->add_option("--external", o.external);
  mosaic->add_option("--extent", o.extent, "minx,miny,maxx,maxy")->required();
  mosaic->add_option("--tile", cfg.sweep.tile)->capture_default_str();
  mosaic->add_option("--stride", cfg.sweep.stride)->capture_default_str();
  mosaic->add_option("--ppm", o.mosaic_ppm, "Pixels per meter (default: tile ppm)");
  mosaic->add_option("--ramp", o.ramp, "gray or heat")->capture_default_str();
  mosaic->add_option("--weighting", o.weighting, "uniform or cosine")->capture_default_str();
  mosaic->add_option("--out", o.out, "Heatmap PNG")->required();
  mosaic->add_option("--prob-out", o.prob_out, "Also write the stitched raster (base path)");
  mosaic->add_option("--run-id", o.run_id, "Register the region as a review run");
  mosaic->add_option("--sites", o.sites, "Known sites for the review run");
  mosaic->add_option("--data-dir", o.data_dir);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--scenes", o.scenes)->required();
  synth->add_option("--seed", cfg.seed)->capture_default_str();
  synth->add_option("--test", o.synth_test, "Test scenes (default scenes/6)");
  synth->add_option("--val", o.synth_val)->capture_default_str();
  synth->add_option("--max-mounds", o.max_mounds)->capture_default_str();
  synth->add_option("--size-m", o.scene_size_m)->capture_default_str();
  synth->add_option("--crs", o.crs);
  synth->add_option("--out", o.out)->required();

  auto* serve = app.add_subcommand("serve", "Serve runs and the review API over HTTP");
  serve->add_option("--port", o.port)->capture_default_str();
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--data-dir", o.data_dir, "Run root (default $MOUNDLINE_DATA_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error(o, "usage", e.what(), 2);
    return 2;
  }

  try {
    if (*curate) return cmd_curate(o);
    if (*tile) return cmd_tile(o);
    if (*train) return cmd_train(o);
    if (*predict) return cmd_predict(o);
    if (*vectorize) return cmd_vectorize(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*mosaic) return cmd_mosaic(o);
    if (*synth) return cmd_synth(o);
    if (*serve) return cmd_serve(o);
  } catch (const Error& e) {
    const int code = e.is_validation() ? 2 : 1;
    report_error(o, std::string(ml::to_string(e.code())), e.what(), code);
    return code;
  } catch (const json::exception& e) {
    report_error(o, "Parse", e.what(), 2);
    return 2;
  } catch (const std::exception& e) {
    report_error(o, "runtime", e.what(), 1);
    return 1;
  }
  return 0;
}
