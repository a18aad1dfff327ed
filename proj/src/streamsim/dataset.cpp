#include "stum/streamsim/dataset.hpp"

#include <fstream>

#include "json.hpp"
#include "stum/numerics/blob.hpp"
#include "stum/streamsim/png_io.hpp"

namespace stum::sim {

using json = nlohmann::ordered_json;
using num::check;
using num::Tensor;

Dataset build_dataset(uint64_t dataset_seed, uint64_t split_seed, uint64_t stream_seed, int k,
                      const SplitConfig& split_cfg, const StreamConfig& stream_cfg,
                      const std::string& config_hash) {
  Dataset ds;
  ds.dataset_seed = dataset_seed;
  ds.split_seed = split_seed;
  ds.stream_seed = stream_seed;
  ds.k = k;
  ds.split_config = split_cfg;
  ds.stream_config = stream_cfg;
  ds.config_hash = config_hash;
  ds.splits = split_views_and_variants(k, split_cfg, split_seed);
  ds.stream = generate_stream(ds.world(), ds.splits, stream_cfg, stream_seed);
  return ds;
}

namespace {

json splits_to_json(const std::vector<CategorySplit>& splits) {
  json arr = json::array();
  for (const auto& s : splits) {
    arr.push_back({{"category", s.train_ring.category_id},
                   {"train_angles", s.train_ring.angles},
                   {"test_angles", s.test_ring.angles},
                   {"train_variants", s.train_variants},
                   {"test_variants", s.test_variants}});
  }
  return arr;
}

std::vector<CategorySplit> splits_from_json(const json& arr) {
  std::vector<CategorySplit> splits;
  for (const auto& e : arr) {
    CategorySplit s;
    const int cat = e.at("category").get<int>();
    s.train_ring.category_id = cat;
    s.train_ring.role = ViewRing::Role::train;
    s.train_ring.angles = e.at("train_angles").get<std::vector<int>>();
    s.test_ring.category_id = cat;
    s.test_ring.role = ViewRing::Role::test;
    s.test_ring.angles = e.at("test_angles").get<std::vector<int>>();
    s.train_variants = e.at("train_variants").get<std::vector<int>>();
    s.test_variants = e.at("test_variants").get<std::vector<int>>();
    splits.push_back(std::move(s));
  }
  return splits;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    check(force, "save_dataset: " + dir.string() + " is not empty (use force)");
  }
  fs::create_directories(dir);

  const auto& st = ds.stream;
  const int T = static_cast<int>(st.length());
  const int S = st.image_size;

  json m;
  m["format"] = "stum-dataset-v1";
  m["k"] = ds.k;
  m["image_size"] = S;
  m["frame_rate"] = st.frame_rate;
  m["dataset_seed"] = ds.dataset_seed;
  m["split_seed"] = ds.split_seed;
  m["stream_seed"] = ds.stream_seed;
  m["config_hash"] = ds.config_hash;
  m["n_frames"] = T;
  m["noise_floor"] = st.noise_floor;
  m["stream_config"] = {{"n_fixations", ds.stream_config.n_fixations},
                        {"fix_min_frames", ds.stream_config.fix_min_frames},
                        {"fix_max_frames", ds.stream_config.fix_max_frames},
                        {"sac_min_frames", ds.stream_config.sac_min_frames},
                        {"sac_max_frames", ds.stream_config.sac_max_frames},
                        {"exclusion_frames", ds.stream_config.exclusion_frames},
                        {"negatives_enabled", ds.stream_config.negatives_enabled}};
  m["split_config"] = {{"n_test_views", ds.split_config.n_test_views},
                       {"n_variants", ds.split_config.n_variants},
                       {"n_test_variants", ds.split_config.n_test_variants}};
  m["splits"] = splits_to_json(ds.splits);
  m["files"] = {{"frames", "frames.stumt"}, {"audio", "audio.stumt"}, {"labels", "labels.stumt"}};

  // Hidden ground truth: consumed by evaluation and grading only.
  json fixations = json::array();
  for (const auto& f : st.fixations) {
    fixations.push_back({{"start", f.start},
                         {"length", f.length},
                         {"category", f.category},
                         {"ring_start", f.ring_start},
                         {"direction", f.direction},
                         {"variant", f.variant}});
  }
  json segments = json::array();
  for (const auto& s : st.segments) {
    segments.push_back({{"fixation", s.fixation},
                        {"category", s.category},
                        {"variant", s.variant},
                        {"start_col", s.start_col},
                        {"length", s.length}});
  }
  m["hidden"] = {{"fixations", fixations}, {"segments", segments}};

  std::ofstream mf(dir / "manifest.json");
  check(mf.is_open(), "save_dataset: cannot write manifest");
  mf << m.dump(2) << '\n';
  mf.close();

  Tensor frames({T, 3, S, S});
  const size_t frame_sz = static_cast<size_t>(3) * S * S;
  for (int t = 0; t < T; ++t) {
    if (st.is_blank(t)) continue;  // stays zero
    std::copy(st.frames[t].data.begin(), st.frames[t].data.end(),
              frames.data.begin() + static_cast<size_t>(t) * frame_sz);
  }
  num::save_blob(dir / "frames.stumt", frames);
  num::save_blob(dir / "audio.stumt", st.audio);

  Tensor labels({T});
  for (int t = 0; t < T; ++t) labels.data[t] = static_cast<float>(st.labels[t]);
  num::save_blob(dir / "labels.stumt", labels);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  check(mf.is_open(), "load_dataset: missing manifest.json in " + dir.string());
  json m = json::parse(mf);
  check(m.at("format") == "stum-dataset-v1", "load_dataset: unknown format");

  Dataset ds;
  ds.k = m.at("k").get<int>();
  ds.dataset_seed = m.at("dataset_seed").get<uint64_t>();
  ds.split_seed = m.at("split_seed").get<uint64_t>();
  ds.stream_seed = m.at("stream_seed").get<uint64_t>();
  ds.config_hash = m.at("config_hash").get<std::string>();
  const auto& sc = m.at("stream_config");
  ds.stream_config.n_fixations = sc.at("n_fixations").get<int>();
  ds.stream_config.fix_min_frames = sc.at("fix_min_frames").get<int>();
  ds.stream_config.fix_max_frames = sc.at("fix_max_frames").get<int>();
  ds.stream_config.sac_min_frames = sc.at("sac_min_frames").get<int>();
  ds.stream_config.sac_max_frames = sc.at("sac_max_frames").get<int>();
  ds.stream_config.exclusion_frames = sc.at("exclusion_frames").get<int>();
  ds.stream_config.negatives_enabled = sc.at("negatives_enabled").get<bool>();
  ds.stream_config.image_size = m.at("image_size").get<int>();
  ds.stream_config.frame_rate = m.at("frame_rate").get<int>();
  ds.stream_config.noise_floor = m.at("noise_floor").get<float>();
  const auto& pc = m.at("split_config");
  ds.split_config.n_test_views = pc.at("n_test_views").get<int>();
  ds.split_config.n_variants = pc.at("n_variants").get<int>();
  ds.split_config.n_test_variants = pc.at("n_test_variants").get<int>();
  ds.splits = splits_from_json(m.at("splits"));

  MultimodalStream& st = ds.stream;
  st.image_size = ds.stream_config.image_size;
  st.frame_rate = ds.stream_config.frame_rate;
  st.noise_floor = ds.stream_config.noise_floor;

  Tensor frames = num::load_blob(dir / m.at("files").at("frames").get<std::string>());
  check(frames.ndim() == 4 && frames.shape[1] == 3, "load_dataset: bad frames blob");
  const int T = frames.shape[0];
  const int S = frames.shape[2];
  check(T == m.at("n_frames").get<int>(), "load_dataset: frame count mismatch");
  st.audio = num::load_blob(dir / m.at("files").at("audio").get<std::string>());
  check(st.audio.ndim() == 2 && st.audio.shape[0] == kMelBands && st.audio.shape[1] == T,
        "load_dataset: bad audio blob");
  Tensor labels = num::load_blob(dir / m.at("files").at("labels").get<std::string>());
  check(labels.ndim() == 1 && labels.shape[0] == T, "load_dataset: bad labels blob");

  st.labels.resize(T);
  for (int t = 0; t < T; ++t) st.labels[t] = static_cast<int>(labels.data[t]);
  st.frames.assign(T, Tensor{});
  const size_t frame_sz = static_cast<size_t>(3) * S * S;
  for (int t = 0; t < T; ++t) {
    if (st.labels[t] == kLabelNone) continue;
    Tensor f({3, S, S});
    std::copy(frames.data.begin() + static_cast<size_t>(t) * frame_sz,
              frames.data.begin() + static_cast<size_t>(t + 1) * frame_sz, f.data.begin());
    st.frames[t] = std::move(f);
  }

  for (const auto& e : m.at("hidden").at("fixations")) {
    FixationRecord f;
    f.start = e.at("start").get<int>();
    f.length = e.at("length").get<int>();
    f.category = e.at("category").get<int>();
    f.ring_start = e.at("ring_start").get<int>();
    f.direction = e.at("direction").get<int>();
    f.variant = e.at("variant").get<int>();
    st.fixations.push_back(f);
  }
  for (const auto& e : m.at("hidden").at("segments")) {
    SegmentRecord s;
    s.fixation = e.at("fixation").get<int>();
    s.category = e.at("category").get<int>();
    s.variant = e.at("variant").get<int>();
    s.start_col = e.at("start_col").get<int>();
    s.length = e.at("length").get<int>();
    st.segments.push_back(s);
  }
  return ds;
}

num::Tensor resize_rgb(const Tensor& src, int out_size) {
  check(src.ndim() == 3 && src.shape[0] == 3, "resize_rgb: need [3,H,W]");
  const int H = src.shape[1], W = src.shape[2];
  if (H == out_size && W == out_size) return src;
  Tensor out({3, out_size, out_size});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < out_size; ++y) {
      const double sy = (y + 0.5) * H / out_size - 0.5;
      const int y0 = std::max(0, std::min(H - 1, static_cast<int>(std::floor(sy))));
      const int y1 = std::min(H - 1, y0 + 1);
      const double fy = std::max(0.0, std::min(1.0, sy - y0));
      for (int x = 0; x < out_size; ++x) {
        const double sx = (x + 0.5) * W / out_size - 0.5;
        const int x0 = std::max(0, std::min(W - 1, static_cast<int>(std::floor(sx))));
        const int x1 = std::min(W - 1, x0 + 1);
        const double fx = std::max(0.0, std::min(1.0, sx - x0));
        const double v00 = src.at(c, y0, x0), v01 = src.at(c, y0, x1);
        const double v10 = src.at(c, y1, x0), v11 = src.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                                             (v10 * (1 - fx) + v11 * fx) * fy);
      }
    }
  }
  return out;
}

std::vector<IngestedRing> ingest_image_directory(const std::filesystem::path& dir,
                                                 int image_size) {
  namespace fs = std::filesystem;
  std::ifstream mf(dir / "manifest.json");
  check(mf.is_open(), "ingest: missing manifest.json in " + dir.string());
  json m = json::parse(mf);

  std::vector<IngestedRing> rings;
  for (const auto& cat : m.at("categories")) {
    IngestedRing ring;
    ring.category_id = cat.at("id").get<int>();
    const auto files = cat.at("files").get<std::vector<std::string>>();
    check(files.size() >= 8, "ingest: category " + std::to_string(ring.category_id) +
                                 " has fewer than 8 views");
    std::vector<int> angles;
    if (cat.contains("angles")) {
      angles = cat.at("angles").get<std::vector<int>>();
      check(angles.size() == files.size(), "ingest: angles/files length mismatch");
    } else {
      check(files.size() <= kAnglesPerRing,
            "ingest: more than 72 files need explicit angles");
      for (size_t i = 0; i < files.size(); ++i) {
        angles.push_back(static_cast<int>(i * kAnglesPerRing / files.size()) * kAngleStep);
      }
    }
    for (size_t i = 0; i < files.size(); ++i) {
      const fs::path p = dir / files[i];
      check(fs::exists(p), "ingest: missing file " + p.string());
      Image8 img = read_png(p);  // throws on unreadable content
      ring.views.push_back(resize_rgb(rgb8_to_tensor(img), image_size));
      ring.angles.push_back(angles[i]);
    }
    rings.push_back(std::move(ring));
  }
  return rings;
}

void export_ring_directory(const std::filesystem::path& dir,
                           const std::vector<IngestedRing>& rings) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json m;
  m["categories"] = json::array();
  for (const auto& ring : rings) {
    std::vector<std::string> files;
    for (size_t i = 0; i < ring.views.size(); ++i) {
      const std::string name = "cat" + std::to_string(ring.category_id) + "_ang" +
                               std::to_string(ring.angles[i]) + ".png";
      write_png(dir / name, tensor_to_rgb8(ring.views[i]));
      files.push_back(name);
    }
    m["categories"].push_back(
        {{"id", ring.category_id}, {"files", files}, {"angles", ring.angles}});
  }
  std::ofstream mf(dir / "manifest.json");
  check(mf.is_open(), "export_ring_directory: cannot write manifest");
  mf << m.dump(2) << '\n';
}

}  // namespace stum::sim
