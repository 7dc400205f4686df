// Library walkthrough: synthesize a few scenes, train the baseline segmenter,
// extract candidate polygons from one held-out scene and score them.

#include <iostream>

#include "moundline/evals.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/model.hpp"
#include "moundline/postproc.hpp"
#include "moundline/synth.hpp"

namespace ml = moundline;

int main() {
  ml::synth::DatasetSpec ds;
  ds.scenes = 24;
  ds.test = 4;
  ds.seed = 1;
  const auto entries = ml::synth::generate_dataset(ds);

  std::vector<ml::tiles::Tile> train;
  std::vector<const ml::synth::DatasetEntry*> test;
  for (const auto& e : entries) {
    if (e.split == ml::catalog::Split::test) {
      test.push_back(&e);
    } else {
      train.push_back(ml::synth::scene_tile(e));
    }
  }

  ml::model::SegmenterSpec spec;
  spec.epochs = 10;
  const auto model = ml::model::train_baseline(train, {}, spec);
  std::cerr << "final train loss " << model.history.back().train << "\n";

  std::vector<ml::evals::DetectionImage> images;
  for (const auto* e : test) {
    ml::evals::DetectionImage di;
    di.image_id = e->id;
    for (const auto& s : e->scene.gt) di.gt_sites.push_back({s.id, s.shape});
    di.candidates = ml::postproc::extract_candidates(ml::model::predict(model, e->scene.image), {}, e->id);
    images.push_back(std::move(di));
  }
  const auto counts = ml::evals::count_outcomes(ml::evals::detect_outcomes(images));
  std::cout << ml::evals::render_table({{"baseline", "Automatic", counts}});

  // candidates of the first test scene as GeoJSON
  std::cout << ml::io::to_json(ml::postproc::candidates_to_collection(images.front().candidates)).dump(1) << "\n";
}
