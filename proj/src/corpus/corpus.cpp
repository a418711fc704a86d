#include "assg/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "assg/errors.hpp"
#include "assg/rng.hpp"
#include "json.hpp"

namespace assg {

namespace {

constexpr char kFeatureMagic[8] = {'A', 'S', 'S', 'G', 'F', 'E', 'A', 'T'};
constexpr std::size_t kFeatureHeader = 16;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::span<const unsigned char> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::string video_id(Split split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04zu", split == Split::train ? "train" : "test", index);
  return buf;
}

VideoRecord generate_video(const GenConfig& cfg, const StreamPrototypes& rgb_protos,
                           const StreamPrototypes& flow_protos, Split split, std::size_t index) {
  std::mt19937_64 rng(derive_seed(cfg.seed, split == Split::train ? 1 : 2, index));
  const std::size_t n = cfg.n_segments;

  VideoRecord video;
  video.id = video_id(split, index);
  video.split = split;

  const std::size_t max_labels = std::min(cfg.max_labels, cfg.num_classes);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(1, max_labels)(rng);
  std::vector<int> classes(cfg.num_classes);
  for (std::size_t c = 0; c < classes.size(); ++c) classes[c] = static_cast<int>(c + 1);
  std::shuffle(classes.begin(), classes.end(), rng);
  video.labels.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(m));

  const std::size_t lo = std::max(m, cfg.min_instances);
  const std::size_t hi = std::max(lo, cfg.max_instances);
  const std::size_t count = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);

  std::vector<int> instance_class(count);
  for (std::size_t i = 0; i < count; ++i) {
    instance_class[i] = i < m ? video.labels[i]
                              : video.labels[std::uniform_int_distribution<std::size_t>(0, m - 1)(rng)];
  }
  std::shuffle(instance_class.begin(), instance_class.end(), rng);
  std::sort(video.labels.begin(), video.labels.end());

  std::uniform_real_distribution<double> frac(cfg.min_length_frac, cfg.max_length_frac);
  std::vector<std::size_t> lengths(count);
  std::size_t occupied = count - 1;  // one background segment between instances
  for (auto& len : lengths) {
    len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac(rng) * static_cast<double>(n))));
    occupied += len;
  }
  if (occupied > n) {
    throw GenerationError("video " + video.id + ": " + std::to_string(count) +
                          " instances need " + std::to_string(occupied) + " segments but N=" +
                          std::to_string(n));
  }

  // Distribute the slack into count+1 gaps.
  const std::size_t slack = n - occupied;
  std::vector<std::size_t> cuts(count);
  std::uniform_int_distribution<std::size_t> cut(0, slack);
  for (auto& c : cuts) c = cut(rng);
  std::sort(cuts.begin(), cuts.end());
  std::size_t cursor = 0, prev_cut = 0;
  for (std::size_t i = 0; i < count; ++i) {
    cursor += cuts[i] - prev_cut;
    prev_cut = cuts[i];
    video.ground_truth.push_back({instance_class[i], cursor, cursor + lengths[i] - 1});
    cursor += lengths[i] + 1;
  }

  std::mt19937_64 rgb_rng(derive_seed(cfg.seed, 10 + (split == Split::train ? 1 : 2), index));
  std::mt19937_64 flow_rng(derive_seed(cfg.seed, 20 + (split == Split::train ? 1 : 2), index));
  video.rgb = synthesize_stream(rgb_protos, video.ground_truth, n, cfg.noise_sigma, rgb_rng);
  video.flow = synthesize_stream(flow_protos, video.ground_truth, n, cfg.noise_sigma, flow_rng);
  return video;
}

}  // namespace

std::string_view to_string(Stream s) { return s == Stream::rgb ? "rgb" : "flow"; }
std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

Stream parse_stream(std::string_view name) {
  if (name == "rgb") return Stream::rgb;
  if (name == "flow") return Stream::flow;
  throw std::invalid_argument("unknown stream '" + std::string(name) + "' (expected rgb|flow)");
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "' (expected train|test)");
}

FeatureSequence::FeatureSequence(std::size_t n, std::size_t k, std::vector<double> v)
    : n_segments(n), k_dims(k), values(std::move(v)) {
  if (values.size() != n * k) {
    throw DimensionError("feature sequence " + std::to_string(n) + "x" + std::to_string(k) +
                         " with " + std::to_string(values.size()) + " values");
  }
}

Matrix FeatureSequence::channels() const {
  Matrix out(k_dims, n_segments);
  for (std::size_t t = 0; t < n_segments; ++t)
    for (std::size_t k = 0; k < k_dims; ++k) out(k, t) = at(t, k);
  return out;
}

std::vector<const VideoRecord*> Corpus::split(Split s) const {
  std::vector<const VideoRecord*> out;
  for (const auto& v : videos)
    if (v.split == s) out.push_back(&v);
  return out;
}

const VideoRecord& Corpus::find(std::string_view id) const {
  for (const auto& v : videos)
    if (v.id == id) return v;
  throw std::out_of_range("unknown video id '" + std::string(id) + "'");
}

void validate(const VideoRecord& video, std::size_t num_classes) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("video " + video.id + ": " + why);
  };
  const auto check_stream = [&](const FeatureSequence& fs, const char* name) {
    if (fs.n_segments < 1 || fs.k_dims < 1) fail(std::string(name) + " stream is empty");
    if (fs.values.size() != fs.n_segments * fs.k_dims) fail(std::string(name) + " size mismatch");
    for (double v : fs.values)
      if (!std::isfinite(v)) fail(std::string(name) + " has non-finite values");
  };
  check_stream(video.rgb, "rgb");
  check_stream(video.flow, "flow");
  if (video.rgb.n_segments != video.flow.n_segments || video.rgb.k_dims != video.flow.k_dims)
    fail("streams disagree on N or K");
  if (video.labels.empty()) fail("no labels");
  for (int c : video.labels)
    if (c < 1 || static_cast<std::size_t>(c) > num_classes) fail("label out of range");
  const std::size_t n = video.n_segments();
  std::vector<bool> covered(n, false);
  for (const auto& s : video.ground_truth) {
    if (s.start > s.end || s.end >= n) fail("ground truth interval out of range");
    if (std::find(video.labels.begin(), video.labels.end(), s.label) == video.labels.end())
      fail("ground truth class not among labels");
    for (std::size_t t = s.start; t <= s.end; ++t) {
      if (covered[t]) fail("overlapping ground truth");
      covered[t] = true;
    }
  }
}

void validate(const Corpus& corpus) {
  if (corpus.num_classes < 1) throw std::invalid_argument("corpus has no classes");
  std::set<std::string> ids;
  for (const auto& v : corpus.videos) {
    validate(v, corpus.num_classes);
    if (v.rgb.k_dims != corpus.k_dims())
      throw std::invalid_argument("video " + v.id + ": K differs from the corpus");
    if (!ids.insert(v.id).second) throw std::invalid_argument("duplicate video id " + v.id);
  }
}

void GenConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("gen: " + why); };
  if (num_classes < 1 || n_segments < 1 || k_dims < 1) fail("counts must be positive");
  if (train_videos + test_videos < 1) fail("no videos requested");
  if (min_instances < 1 || max_instances < min_instances) fail("bad instance range");
  if (max_labels < 1) fail("max_labels must be positive");
  if (!(min_length_frac > 0.0 && max_length_frac < 1.0 && min_length_frac <= max_length_frac))
    fail("length fractions must satisfy 0 < min <= max < 1");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(separation > 0.0)) fail("separation must be positive");
}

StreamPrototypes draw_prototypes(std::size_t num_classes, std::size_t k_dims, double separation,
                                 std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  StreamPrototypes protos;
  for (std::size_t c = 0; c <= num_classes; ++c) {
    std::vector<double> v(k_dims);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : v) {
        x = normal(rng);
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x = x / norm * separation;
    protos.vectors.push_back(std::move(v));
  }
  return protos;
}

FeatureSequence synthesize_stream(const StreamPrototypes& protos, std::span<const Segment> gt,
                                  std::size_t n_segments, double sigma, std::mt19937_64& rng) {
  const std::size_t k = protos.vectors.front().size();
  std::vector<int> owner(n_segments, 0);
  for (const auto& s : gt)
    for (std::size_t t = s.start; t <= s.end; ++t) owner[t] = s.label;

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(n_segments * k);
  for (std::size_t t = 0; t < n_segments; ++t) {
    const auto& proto = protos.vectors.at(static_cast<std::size_t>(owner[t]));
    for (std::size_t d = 0; d < k; ++d) {
      const double noise = sigma > 0.0 ? sigma * normal(rng) : 0.0;
      values[t * k + d] = static_cast<double>(static_cast<float>(proto[d] + noise));
    }
  }
  return FeatureSequence(n_segments, k, std::move(values));
}

Corpus generate_corpus(const GenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 proto_rng(derive_seed(cfg.seed, 0, 0));
  const StreamPrototypes rgb = draw_prototypes(cfg.num_classes, cfg.k_dims, cfg.separation, proto_rng);
  const StreamPrototypes flow = draw_prototypes(cfg.num_classes, cfg.k_dims, cfg.separation, proto_rng);

  Corpus corpus;
  corpus.num_classes = cfg.num_classes;
  for (std::size_t i = 0; i < cfg.train_videos; ++i)
    corpus.videos.push_back(generate_video(cfg, rgb, flow, Split::train, i));
  for (std::size_t i = 0; i < cfg.test_videos; ++i)
    corpus.videos.push_back(generate_video(cfg, rgb, flow, Split::test, i));
  return corpus;
}

// ---- feature files ----------------------------------------------------------

std::vector<unsigned char> encode_features(const FeatureSequence& fs) {
  std::vector<unsigned char> out(sizeof(kFeatureMagic));
  out.reserve(kFeatureHeader + 4 * fs.values.size());
  std::memcpy(out.data(), kFeatureMagic, sizeof(kFeatureMagic));
  put_u32(out, static_cast<std::uint32_t>(fs.n_segments));
  put_u32(out, static_cast<std::uint32_t>(fs.k_dims));
  for (double v : fs.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

FeatureSequence decode_features(std::span<const unsigned char> bytes) {
  if (bytes.size() < kFeatureHeader) {
    throw FormatError("feature file truncated at offset " + std::to_string(bytes.size()) +
                      ": header needs 16 bytes");
  }
  if (std::memcmp(bytes.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0) {
    throw FormatError("feature file has bad magic at offset 0 (expected ASSGFEAT)");
  }
  const std::size_t n = get_u32(bytes, 8);
  const std::size_t k = get_u32(bytes, 12);
  if (n < 1 || k < 1) throw FormatError("feature file header at offset 8 declares N or K = 0");
  const std::size_t expected = kFeatureHeader + 4 * n * k;
  if (bytes.size() < expected) {
    throw FormatError("feature file truncated at offset " + std::to_string(bytes.size()) +
                      ": N*K=" + std::to_string(n * k) + " floats need " +
                      std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw FormatError("feature file has " + std::to_string(bytes.size() - expected) +
                      " trailing bytes at offset " + std::to_string(expected) +
                      " beyond N*K=" + std::to_string(n * k) + " floats");
  }
  std::vector<double> values(n * k);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, kFeatureHeader + 4 * i));
    if (!std::isfinite(f)) {
      throw FormatError("non-finite feature value at offset " + std::to_string(kFeatureHeader + 4 * i));
    }
    values[i] = static_cast<double>(f);
  }
  return FeatureSequence(n, k, std::move(values));
}

void write_features(const std::filesystem::path& path, const FeatureSequence& fs) {
  const auto bytes = encode_features(fs);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_features(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- manifest -----------------------------------------------------------------

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : corpus.videos) {
    const std::string rgb_rel = "features/" + v.id + ".rgb.feat";
    const std::string flow_rel = "features/" + v.id + ".flow.feat";
    write_features(dir / rgb_rel, v.rgb);
    write_features(dir / flow_rel, v.flow);
    nlohmann::json gt = nlohmann::json::array();
    for (const auto& s : v.ground_truth)
      gt.push_back({{"class", s.label}, {"start", s.start}, {"end", s.end}});
    videos.push_back({{"id", v.id},
                      {"n_segments", v.rgb.n_segments},
                      {"k_dims", v.rgb.k_dims},
                      {"labels", v.labels},
                      {"ground_truth", gt},
                      {"features", {{"rgb", rgb_rel}, {"flow", flow_rel}}},
                      {"split", to_string(v.split)}});
  }
  nlohmann::json doc = {{"num_classes", corpus.num_classes}, {"videos", videos}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
  out << doc.dump(1) << '\n';
}

Corpus read_corpus(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open corpus manifest " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  const auto base = manifest.parent_path();
  Corpus corpus;
  try {
    corpus.num_classes = doc.at("num_classes").get<std::size_t>();
    for (const auto& jv : doc.at("videos")) {
      VideoRecord v;
      v.id = jv.at("id").get<std::string>();
      v.labels = jv.at("labels").get<std::vector<int>>();
      std::sort(v.labels.begin(), v.labels.end());
      for (const auto& g : jv.at("ground_truth"))
        v.ground_truth.push_back({g.at("class").get<int>(), g.at("start").get<std::size_t>(),
                                  g.at("end").get<std::size_t>()});
      v.split = parse_split(jv.at("split").get<std::string>());
      v.rgb = read_features(base / jv.at("features").at("rgb").get<std::string>());
      v.flow = read_features(base / jv.at("features").at("flow").get<std::string>());
      if (v.rgb.n_segments != jv.at("n_segments").get<std::size_t>() ||
          v.rgb.k_dims != jv.at("k_dims").get<std::size_t>()) {
        throw FormatError("video " + v.id + ": feature file shape disagrees with manifest");
      }
      corpus.videos.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  try {
    validate(corpus);
  } catch (const std::invalid_argument& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  return corpus;
}

std::vector<double> shot_change_signal(const FeatureSequence& fs) {
  std::vector<double> s(fs.n_segments, 0.0);
  for (std::size_t t = 1; t < fs.n_segments; ++t) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < fs.k_dims; ++k) {
      const double diff = fs.at(t, k) - fs.at(t - 1, k);
      d2 += diff * diff;
    }
    s[t] = std::sqrt(d2);
  }
  if (s.empty()) return s;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& v : s) v = range > 0.0 ? (v - min) / range : 0.0;
  return s;
}

}  // namespace assg
