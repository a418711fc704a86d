#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "assg/matrix.hpp"

namespace assg {

enum class Stream { rgb, flow };
enum class Split { train, test };

std::string_view to_string(Stream s);
std::string_view to_string(Split s);
Stream parse_stream(std::string_view name);
Split parse_split(std::string_view name);

/// Per-segment features of one stream of one video, N x K row-major (t-major).
struct FeatureSequence {
  std::size_t n_segments = 0;
  std::size_t k_dims = 0;
  std::vector<double> values;

  FeatureSequence() = default;
  FeatureSequence(std::size_t n, std::size_t k, std::vector<double> v);

  double at(std::size_t t, std::size_t k) const { return values[t * k_dims + k]; }
  std::span<const double> segment(std::size_t t) const {
    return {values.data() + t * k_dims, k_dims};
  }
  /// K x N layout consumed by the networks (one column per segment).
  Matrix channels() const;

  friend bool operator==(const FeatureSequence&, const FeatureSequence&) = default;
};

/// A labeled temporal interval, inclusive on both ends.
struct Segment {
  int label = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct VideoRecord {
  std::string id;
  FeatureSequence rgb;
  FeatureSequence flow;
  std::vector<int> labels;  // sorted, unique, each in 1..C
  std::vector<Segment> ground_truth;  // evaluation only
  Split split = Split::train;

  const FeatureSequence& stream(Stream s) const { return s == Stream::rgb ? rgb : flow; }
  std::size_t n_segments() const { return rgb.n_segments; }
  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

struct Corpus {
  std::size_t num_classes = 0;
  std::vector<VideoRecord> videos;

  std::vector<const VideoRecord*> split(Split s) const;
  const VideoRecord& find(std::string_view id) const;
  std::size_t k_dims() const { return videos.empty() ? 0 : videos.front().rgb.k_dims; }
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Throws std::invalid_argument describing the first violated invariant.
void validate(const VideoRecord& video, std::size_t num_classes);
void validate(const Corpus& corpus);

struct GenConfig {
  std::uint64_t seed = 20190612;
  std::size_t num_classes = 5;
  std::size_t n_segments = 100;
  std::size_t k_dims = 32;
  std::size_t train_videos = 200;
  std::size_t test_videos = 50;
  std::size_t min_instances = 1;
  std::size_t max_instances = 3;
  std::size_t max_labels = 2;  // distinct classes per video
  double min_length_frac = 0.08;
  double max_length_frac = 0.30;
  double noise_sigma = 0.5;
  double separation = 1.0;  // norm of every prototype

  void validate() const;
};

/// Unit-direction prototypes of one stream scaled by GenConfig::separation.
/// Index 0 is background, 1..C the action classes.
struct StreamPrototypes {
  std::vector<std::vector<double>> vectors;
};

StreamPrototypes draw_prototypes(std::size_t num_classes, std::size_t k_dims, double separation,
                                 std::mt19937_64& rng);

/// Emits prototype + N(0, sigma) per segment, rounded to 32-bit floats.
FeatureSequence synthesize_stream(const StreamPrototypes& protos, std::span<const Segment> gt,
                                  std::size_t n_segments, double sigma, std::mt19937_64& rng);

/// Deterministic in cfg (including cfg.seed). Throws GenerationError when the
/// instances requested for a video cannot be packed into n_segments.
Corpus generate_corpus(const GenConfig& cfg);

// ---- feature files ------------------------------------------------------
// 16-byte header: "ASSGFEAT", u32 LE N, u32 LE K; then N*K f32 LE, t-major.

void write_features(const std::filesystem::path& path, const FeatureSequence& fs);
FeatureSequence read_features(const std::filesystem::path& path);
std::vector<unsigned char> encode_features(const FeatureSequence& fs);
FeatureSequence decode_features(std::span<const unsigned char> bytes);

// ---- corpus manifest ----------------------------------------------------

/// Writes manifest.json plus one feature file per stream under `dir`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
/// Reads a manifest; feature paths are resolved relative to its directory.
Corpus read_corpus(const std::filesystem::path& manifest);

/// Consecutive-feature Euclidean distance, s[0] = 0, min-max normalized to
/// [0, 1]; a constant signal maps to all zeros.
std::vector<double> shot_change_signal(const FeatureSequence& fs);

}  // namespace assg
