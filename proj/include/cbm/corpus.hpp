#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cbm {

using UserId = int;
using VenueId = int;
using WordId = int;

enum class Label { kNormal, kAnomalous };

// Insertion-ordered string interner.
class IdTable {
 public:
  int Intern(std::string_view name);
  std::optional<int> Find(std::string_view name) const;
  const std::string& Name(int id) const { return names_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const IdTable& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  bool operator==(const GeoPoint&) const = default;
};

struct PlanarPoint {
  double x = 0.0;  // km east of the corpus centroid
  double y = 0.0;  // km north of the corpus centroid
  bool operator==(const PlanarPoint&) const = default;
};

// One composite behavior: a user checking in at a venue and posting a tip.
struct Behavior {
  UserId user = 0;
  VenueId venue = 0;
  std::vector<WordId> words;  // bag with repeats
  std::int64_t timestamp = 0;
  Label label = Label::kNormal;
  std::optional<UserId> donor;  // set iff label == kAnomalous
  bool synthetic = false;       // injected latent behavior, never tested

  bool operator==(const Behavior&) const = default;
};

struct TokenizerConfig {
  int min_token_length = 2;
  int min_word_frequency = 1;
  std::unordered_set<std::string> stopwords;
};

std::vector<std::string> Tokenize(std::string_view text, const TokenizerConfig& config);

class Corpus {
 public:
  IdTable users;
  IdTable venues;
  IdTable vocabulary;
  std::vector<std::int64_t> word_frequency;        // indexed by WordId
  std::vector<std::optional<GeoPoint>> venue_geo;  // indexed by VenueId
  std::vector<std::optional<PlanarPoint>> venue_xy;
  std::vector<Behavior> behaviors;  // non-decreasing timestamp

  int num_users() const { return users.size(); }
  int num_venues() const { return venues.size(); }
  int num_words() const { return vocabulary.size(); }

  // Unordered friend pairs stored with first < second, sorted and unique.
  const std::vector<std::pair<UserId, UserId>>& friend_pairs() const { return friend_pairs_; }
  const std::vector<UserId>& friends_of(UserId user) const;
  void SetFriends(std::vector<std::pair<UserId, UserId>> pairs);

  // Recomputes planar coordinates from venue_geo about the centroid of all
  // geolocated venues (equirectangular projection).
  void ProjectCoordinates();
  bool has_coordinates() const;

  // Throws kRuntime if any structural invariant is broken.
  void Validate() const;

  bool operator==(const Corpus& other) const;

 private:
  std::vector<std::pair<UserId, UserId>> friend_pairs_;
  std::vector<std::vector<UserId>> adjacency_;
};

struct IngestOptions {
  TokenizerConfig tokenizer;
};

// Reads the records/ties/venues files. Records may be plain (4 columns) or
// labeled (6 columns, as written by WriteCorpus).
Corpus Ingest(const std::filesystem::path& records_file,
              const std::filesystem::path& ties_file,
              const std::optional<std::filesystem::path>& venues_file,
              const IngestOptions& options = {});

std::unordered_set<std::string> LoadStopwords(const std::filesystem::path& path);

struct CorpusFiles {
  std::filesystem::path records;
  std::filesystem::path ties;
  std::filesystem::path venues;  // empty when the corpus has no coordinates
};

// Writes the labeled records format plus ties and (if present) venues.
CorpusFiles WriteCorpus(const Corpus& corpus, const std::filesystem::path& dir);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  double fraction = 0.0;
};

Split ChronologicalSplit(const Corpus& corpus, double fraction);

enum class SwapMode { kBoth, kVenueOnly, kUgcOnly };

std::string_view SwapModeName(SwapMode mode);
SwapMode ParseSwapMode(std::string_view name);

// Even number of test behaviors swapped for a given fraction.
std::size_t SwapCount(std::size_t test_size, double swap_fraction);

// Pairs test behaviors of different users and exchanges their venues, word
// bags or both. The exchanged index pairs are returned through `swapped`.
Corpus SimulateTheft(const Corpus& corpus, const Split& split, double swap_fraction,
                     SwapMode mode, std::uint64_t seed,
                     std::vector<std::pair<std::size_t, std::size_t>>* swapped = nullptr);

struct CorpusStats {
  std::size_t users = 0;
  std::size_t venues = 0;
  std::size_t behaviors = 0;
  std::size_t vocabulary = 0;
  std::size_t word_tokens = 0;
  std::size_t empty_behaviors = 0;
  std::size_t friend_pairs = 0;
  std::size_t anomalous = 0;
  // Per-user record counts bucketed as 1-5, 6-10, 11-20, 21-50, 51-100, >100.
  std::vector<std::pair<std::string, std::size_t>> record_histogram;
};

CorpusStats ComputeStats(const Corpus& corpus);

// FNV-1a over the user, venue and vocabulary tables.
std::uint64_t TablesHash(const IdTable& users, const IdTable& venues, const IdTable& vocabulary);

// 16 lowercase hex digits.
std::string HashHex(std::uint64_t hash);

}  // namespace cbm
