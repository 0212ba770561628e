#include "cbm/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "cbm/error.hpp"
#include "cbm/random.hpp"
#include "cbm/text.hpp"

namespace cbm {

namespace fs = std::filesystem;

int IdTable::Intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<int> IdTable::Find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Tokenize(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string> tokens;
  std::string current;
  int code_points = 0;
  auto flush = [&] {
    if (!current.empty() && code_points >= config.min_token_length &&
        !config.stopwords.contains(current)) {
      tokens.push_back(current);
    }
    current.clear();
    code_points = 0;
  };
  for (char raw : text) {
    auto ch = static_cast<unsigned char>(raw);
    // Bytes >= 0x80 belong to multi-byte UTF-8 sequences and stay inside tokens.
    bool word_char = std::isalnum(ch) || ch >= 0x80;
    if (!word_char) {
      flush();
      continue;
    }
    current.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch)) : raw);
    if ((ch & 0xC0) != 0x80) ++code_points;
  }
  flush();
  return tokens;
}

std::unordered_set<std::string> LoadStopwords(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open stopword file " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto word = text::Trim(line);
    if (word.empty() || word.front() == '#') continue;
    std::string lowered(word);
    for (auto& ch : lowered) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    words.insert(lowered);
  }
  return words;
}

const std::vector<UserId>& Corpus::friends_of(UserId user) const {
  static const std::vector<UserId> kEmpty;
  auto index = static_cast<std::size_t>(user);
  if (index >= adjacency_.size()) return kEmpty;
  return adjacency_[index];
}

void Corpus::SetFriends(std::vector<std::pair<UserId, UserId>> pairs) {
  for (auto& [a, b] : pairs) {
    if (a == b) Fail(ErrorKind::kInput, "friend pair must join two distinct users");
    if (a > b) std::swap(a, b);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  friend_pairs_ = std::move(pairs);
  adjacency_.assign(static_cast<std::size_t>(num_users()), {});
  for (auto [a, b] : friend_pairs_) {
    if (a < 0 || b >= num_users()) Fail(ErrorKind::kInput, "friend pair references unknown user");
    adjacency_[static_cast<std::size_t>(a)].push_back(b);
    adjacency_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& list : adjacency_) std::sort(list.begin(), list.end());
}

void Corpus::ProjectCoordinates() {
  constexpr double kEarthRadiusKm = 6371.0088;
  double lat_sum = 0.0;
  double lon_sum = 0.0;
  std::size_t n = 0;
  for (const auto& geo : venue_geo) {
    if (!geo) continue;
    lat_sum += geo->lat;
    lon_sum += geo->lon;
    ++n;
  }
  venue_xy.assign(venue_geo.size(), std::nullopt);
  if (n == 0) return;
  const double lat0 = lat_sum / static_cast<double>(n);
  const double lon0 = lon_sum / static_cast<double>(n);
  const double to_rad = std::numbers::pi / 180.0;
  const double cos_lat0 = std::cos(lat0 * to_rad);
  for (std::size_t v = 0; v < venue_geo.size(); ++v) {
    if (!venue_geo[v]) continue;
    venue_xy[v] = PlanarPoint{kEarthRadiusKm * (venue_geo[v]->lon - lon0) * to_rad * cos_lat0,
                              kEarthRadiusKm * (venue_geo[v]->lat - lat0) * to_rad};
  }
}

bool Corpus::has_coordinates() const {
  return std::any_of(venue_xy.begin(), venue_xy.end(), [](const auto& p) { return p.has_value(); });
}

void Corpus::Validate() const {
  auto fail = [](const std::string& what) { Fail(ErrorKind::kRuntime, "corpus invariant: " + what); };
  if (static_cast<int>(word_frequency.size()) != num_words()) fail("word frequency table size");
  if (static_cast<int>(venue_geo.size()) != num_venues()) fail("venue coordinate table size");
  for (std::size_t i = 0; i < behaviors.size(); ++i) {
    const auto& b = behaviors[i];
    if (b.user < 0 || b.user >= num_users()) fail("behavior user out of range");
    if (b.venue < 0 || b.venue >= num_venues()) fail("behavior venue out of range");
    for (WordId w : b.words) {
      if (w < 0 || w >= num_words()) fail("behavior word out of range");
    }
    if (i > 0 && behaviors[i - 1].timestamp > b.timestamp) fail("timestamps decrease");
    if ((b.label == Label::kAnomalous) != b.donor.has_value()) fail("label/donor mismatch");
  }
  for (auto [a, b] : friend_pairs_) {
    if (a >= b) fail("friend pair not canonical");
  }
}

bool Corpus::operator==(const Corpus& other) const {
  return users == other.users && venues == other.venues && vocabulary == other.vocabulary &&
         word_frequency == other.word_frequency && venue_geo == other.venue_geo &&
         venue_xy == other.venue_xy && behaviors == other.behaviors &&
         friend_pairs_ == other.friend_pairs_;
}

namespace {

struct RawRecord {
  std::string user;
  std::string venue;
  std::int64_t timestamp = 0;
  std::vector<std::string> tokens;
  Label label = Label::kNormal;
  std::string donor;
  std::size_t line = 0;
};

std::string Where(const fs::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line) + ": ";
}

std::vector<RawRecord> ReadRecords(const fs::path& path, const TokenizerConfig& tokenizer) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open records file " + path.string());
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = text::StripCr(line);
    if (text::Trim(view).empty()) continue;
    auto fields = text::SplitView(view, '\t');
    if (fields.size() < 4) {
      Fail(ErrorKind::kInput, Where(path, line_no) + "expected user, venue, timestamp and text columns");
    }
    RawRecord rec;
    rec.line = line_no;
    rec.user = std::string(text::Trim(fields[0]));
    rec.venue = std::string(text::Trim(fields[1]));
    if (rec.user.empty() || rec.venue.empty()) {
      Fail(ErrorKind::kInput, Where(path, line_no) + "empty user or venue id");
    }
    auto ts = text::Parse<std::int64_t>(fields[2]);
    if (!ts) Fail(ErrorKind::kInput, Where(path, line_no) + "bad timestamp '" + std::string(fields[2]) + "'");
    rec.timestamp = *ts;

    std::size_t text_end = fields.size();
    if (fields.size() == 6 && (fields[4] == "N" || fields[4] == "A")) {
      rec.label = fields[4] == "A" ? Label::kAnomalous : Label::kNormal;
      rec.donor = std::string(text::Trim(fields[5]));
      if ((rec.label == Label::kAnomalous) == rec.donor.empty()) {
        Fail(ErrorKind::kInput, Where(path, line_no) + "label A requires a donor and label N forbids one");
      }
      text_end = 4;
    }
    std::string body;
    for (std::size_t i = 3; i < text_end; ++i) {
      if (i > 3) body.push_back(' ');
      body.append(fields[i]);
    }
    rec.tokens = Tokenize(body, tokenizer);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

Corpus Ingest(const fs::path& records_file, const fs::path& ties_file,
              const std::optional<fs::path>& venues_file, const IngestOptions& options) {
  Corpus corpus;
  auto records = ReadRecords(records_file, options.tokenizer);
  std::stable_sort(records.begin(), records.end(),
                   [](const RawRecord& a, const RawRecord& b) { return a.timestamp < b.timestamp; });

  if (venues_file && !venues_file->empty()) {
    std::ifstream in(*venues_file);
    if (!in) Fail(ErrorKind::kIo, "cannot open venues file " + venues_file->string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto view = text::StripCr(line);
      if (text::Trim(view).empty()) continue;
      auto fields = text::SplitView(view, '\t');
      if (fields.size() != 3) {
        Fail(ErrorKind::kInput, Where(*venues_file, line_no) + "expected venue_id, lat, lon");
      }
      auto lat = text::Parse<double>(fields[1]);
      auto lon = text::Parse<double>(fields[2]);
      if (!lat || !lon || std::abs(*lat) > 90.0 || std::abs(*lon) > 180.0) {
        Fail(ErrorKind::kInput, Where(*venues_file, line_no) + "bad coordinates");
      }
      std::string id(text::Trim(fields[0]));
      if (corpus.venues.Find(id)) {
        Fail(ErrorKind::kInput, Where(*venues_file, line_no) + "duplicate venue id '" + id + "'");
      }
      corpus.venues.Intern(id);
      corpus.venue_geo.push_back(GeoPoint{*lat, *lon});
    }
  }

  std::unordered_map<std::string, std::int64_t> raw_frequency;
  for (const auto& rec : records) {
    for (const auto& token : rec.tokens) ++raw_frequency[token];
  }

  corpus.behaviors.reserve(records.size());
  for (const auto& rec : records) {
    Behavior b;
    b.user = corpus.users.Intern(rec.user);
    b.venue = corpus.venues.Intern(rec.venue);
    if (static_cast<int>(corpus.venue_geo.size()) < corpus.num_venues()) {
      corpus.venue_geo.push_back(std::nullopt);
    }
    b.timestamp = rec.timestamp;
    b.label = rec.label;
    for (const auto& token : rec.tokens) {
      if (raw_frequency[token] < options.tokenizer.min_word_frequency) continue;
      WordId w = corpus.vocabulary.Intern(token);
      if (static_cast<int>(corpus.word_frequency.size()) < corpus.num_words()) {
        corpus.word_frequency.push_back(0);
      }
      ++corpus.word_frequency[static_cast<std::size_t>(w)];
      b.words.push_back(w);
    }
    corpus.behaviors.push_back(std::move(b));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].donor.empty()) continue;
    auto donor = corpus.users.Find(records[i].donor);
    if (!donor) {
      Fail(ErrorKind::kInput, Where(records_file, records[i].line) + "unknown donor '" + records[i].donor + "'");
    }
    corpus.behaviors[i].donor = *donor;
  }

  std::vector<std::pair<UserId, UserId>> pairs;
  if (!ties_file.empty()) {
    std::ifstream in(ties_file);
    if (!in) Fail(ErrorKind::kIo, "cannot open ties file " + ties_file.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto view = text::StripCr(line);
      if (text::Trim(view).empty()) continue;
      auto fields = text::SplitView(view, '\t');
      if (fields.size() != 2) Fail(ErrorKind::kInput, Where(ties_file, line_no) + "expected two user ids");
      auto a = corpus.users.Find(text::Trim(fields[0]));
      auto b = corpus.users.Find(text::Trim(fields[1]));
      if (!a || !b) {
        Fail(ErrorKind::kInput, Where(ties_file, line_no) + "friend pair references unknown user '" +
                                    std::string(!a ? fields[0] : fields[1]) + "'");
      }
      if (*a == *b) Fail(ErrorKind::kInput, Where(ties_file, line_no) + "self friendship");
      pairs.emplace_back(*a, *b);
    }
  }
  corpus.SetFriends(std::move(pairs));
  corpus.ProjectCoordinates();
  corpus.Validate();
  return corpus;
}

CorpusFiles WriteCorpus(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  CorpusFiles files{dir / "records.tsv", dir / "ties.tsv", {}};
  auto open = [](const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
    return out;
  };
  {
    auto out = open(files.records);
    for (const auto& b : corpus.behaviors) {
      out << corpus.users.Name(b.user) << '\t' << corpus.venues.Name(b.venue) << '\t' << b.timestamp << '\t';
      for (std::size_t i = 0; i < b.words.size(); ++i) {
        if (i) out << ' ';
        out << corpus.vocabulary.Name(b.words[i]);
      }
      out << '\t' << (b.label == Label::kAnomalous ? 'A' : 'N') << '\t';
      if (b.donor) out << corpus.users.Name(*b.donor);
      out << '\n';
    }
  }
  {
    auto out = open(files.ties);
    for (auto [a, b] : corpus.friend_pairs()) {
      out << corpus.users.Name(a) << '\t' << corpus.users.Name(b) << '\n';
    }
  }
  bool any_geo = std::any_of(corpus.venue_geo.begin(), corpus.venue_geo.end(),
                             [](const auto& g) { return g.has_value(); });
  if (any_geo) {
    files.venues = dir / "venues.tsv";
    auto out = open(files.venues);
    for (int v = 0; v < corpus.num_venues(); ++v) {
      const auto& geo = corpus.venue_geo[static_cast<std::size_t>(v)];
      if (!geo) continue;
      out << corpus.venues.Name(v) << '\t' << text::FormatDouble(geo->lat) << '\t'
          << text::FormatDouble(geo->lon) << '\n';
    }
  }
  return files;
}

Split ChronologicalSplit(const Corpus& corpus, double fraction) {
  Require(fraction > 0.0 && fraction < 1.0, "split fraction must lie in (0, 1)");
  const std::size_t n = corpus.behaviors.size();
  Require(n >= 2, "chronological split needs at least 2 behaviors");
  auto cut = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  cut = std::clamp<std::size_t>(cut, 1, n - 1);
  Split split;
  split.fraction = fraction;
  for (std::size_t i = 0; i < n; ++i) (i < cut ? split.train : split.test).push_back(i);
  return split;
}

std::string_view SwapModeName(SwapMode mode) {
  switch (mode) {
    case SwapMode::kBoth: return "both";
    case SwapMode::kVenueOnly: return "venue";
    case SwapMode::kUgcOnly: return "ugc";
  }
  return "both";
}

SwapMode ParseSwapMode(std::string_view name) {
  if (name == "both") return SwapMode::kBoth;
  if (name == "venue" || name == "venue-only") return SwapMode::kVenueOnly;
  if (name == "ugc" || name == "ugc-only") return SwapMode::kUgcOnly;
  Fail(ErrorKind::kConfig, "unknown swap mode '" + std::string(name) + "' (both|venue|ugc)");
}

std::size_t SwapCount(std::size_t test_size, double swap_fraction) {
  auto n = static_cast<std::size_t>(std::floor(swap_fraction * static_cast<double>(test_size)));
  if (n % 2 == 1) n = (n + 1 <= test_size) ? n + 1 : n - 1;
  return std::max<std::size_t>(n, 2);
}

Corpus SimulateTheft(const Corpus& corpus, const Split& split, double swap_fraction, SwapMode mode,
                     std::uint64_t seed, std::vector<std::pair<std::size_t, std::size_t>>* swapped) {
  Require(swap_fraction > 0.0 && swap_fraction < 1.0, "swap fraction must lie in (0, 1)");
  Require(!split.test.empty(), "theft simulation needs a non-empty test set");
  const std::size_t target_pairs = SwapCount(split.test.size(), swap_fraction) / 2;

  Rng rng(seed);
  std::vector<std::size_t> order = split.test;
  rng.Shuffle(order);

  // Greedy pairing over the shuffled order; partners must have different owners.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> used(order.size(), false);
  for (std::size_t i = 0; i < order.size() && pairs.size() < target_pairs; ++i) {
    if (used[i]) continue;
    const UserId owner = corpus.behaviors[order[i]].user;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (used[j] || corpus.behaviors[order[j]].user == owner) continue;
      used[i] = used[j] = true;
      pairs.emplace_back(order[i], order[j]);
      break;
    }
  }
  if (pairs.empty()) {
    Fail(ErrorKind::kInvalidArgument, "theft simulation needs 2 test behaviors from distinct users");
  }

  Corpus out = corpus;
  for (auto& b : out.behaviors) {
    b.label = Label::kNormal;
    b.donor.reset();
  }
  for (auto [a, b] : pairs) {
    auto& first = out.behaviors[a];
    auto& second = out.behaviors[b];
    if (mode != SwapMode::kUgcOnly) std::swap(first.venue, second.venue);
    if (mode != SwapMode::kVenueOnly) std::swap(first.words, second.words);
    first.label = second.label = Label::kAnomalous;
    first.donor = second.user;
    second.donor = first.user;
  }
  if (swapped) *swapped = std::move(pairs);
  return out;
}

CorpusStats ComputeStats(const Corpus& corpus) {
  CorpusStats stats;
  stats.users = static_cast<std::size_t>(corpus.num_users());
  stats.venues = static_cast<std::size_t>(corpus.num_venues());
  stats.vocabulary = static_cast<std::size_t>(corpus.num_words());
  stats.behaviors = corpus.behaviors.size();
  stats.friend_pairs = corpus.friend_pairs().size();
  std::vector<std::size_t> per_user(stats.users, 0);
  for (const auto& b : corpus.behaviors) {
    ++per_user[static_cast<std::size_t>(b.user)];
    stats.word_tokens += b.words.size();
    if (b.words.empty()) ++stats.empty_behaviors;
    if (b.label == Label::kAnomalous) ++stats.anomalous;
  }
  const std::vector<std::pair<std::string, std::size_t>> buckets = {
      {"1-5", 5}, {"6-10", 10}, {"11-20", 20}, {"21-50", 50}, {"51-100", 100}, {">100", SIZE_MAX}};
  for (const auto& [name, upper] : buckets) stats.record_histogram.emplace_back(name, 0);
  for (std::size_t count : per_user) {
    if (count == 0) continue;
    for (std::size_t k = 0; k < buckets.size(); ++k) {
      if (count <= buckets[k].second) {
        ++stats.record_histogram[k].second;
        break;
      }
    }
  }
  return stats;
}

std::string HashHex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::uint64_t TablesHash(const IdTable& users, const IdTable& venues, const IdTable& vocabulary) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;  // separator byte that cannot occur in UTF-8
    h *= 0x100000001b3ULL;
  };
  for (const auto* table : {&users, &venues, &vocabulary}) {
    feed(std::to_string(table->size()));
    for (const auto& name : table->names()) feed(name);
  }
  return h;
}

}  // namespace cbm
