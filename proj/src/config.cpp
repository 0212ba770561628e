#include "cbm/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "cbm/error.hpp"
#include "cbm/text.hpp"

namespace cbm {

namespace {

[[noreturn]] void BadValue(std::string_view key, std::string_view value, std::string_view expected) {
  Fail(ErrorKind::kConfig, "config key '" + std::string(key) + "': cannot use '" + std::string(value) +
                               "', expected " + std::string(expected));
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view value) {
  auto parsed = text::Parse<T>(text::Trim(value));
  if (!parsed) BadValue(key, value, "a number");
  return *parsed;
}

bool ParseBool(std::string_view key, std::string_view value) {
  value = text::Trim(value);
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  BadValue(key, value, "true or false");
}

std::vector<int> ParseIntList(std::string_view key, std::string_view value) {
  std::vector<int> out;
  for (auto part : text::SplitView(value, ',')) out.push_back(ParseNumber<int>(key, part));
  return out;
}

std::string IntList(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string Bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field Number(std::string key, T RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, std::string_view v) { c.*member = ParseNumber<T>(key, v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return text::FormatDouble(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename S, typename T>
Field Nested(std::string key, S RunConfig::*outer, T S::*inner) {
  return {key,
          [key, outer, inner](RunConfig& c, std::string_view v) { (c.*outer).*inner = ParseNumber<T>(key, v); },
          [outer, inner](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return text::FormatDouble((c.*outer).*inner);
            else return std::to_string((c.*outer).*inner);
          }};
}

Field Flag(std::string key, bool RunConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = ParseBool(key, v); },
          [member](const RunConfig& c) { return Bool(c.*member); }};
}

Field String(std::string key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, std::string_view v) { c.*member = std::string(text::Trim(v)); },
          [member](const RunConfig& c) { return c.*member; }};
}

Field SynthString(std::string key, std::string SynthConfig::*member) {
  return {key, [member](RunConfig& c, std::string_view v) { c.synth.*member = std::string(text::Trim(v)); },
          [member](const RunConfig& c) { return c.synth.*member; }};
}

Field AutoNumber(std::string key, std::optional<double> RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, std::string_view v) {
            if (text::Trim(v) == "auto") c.*member = std::nullopt;
            else c.*member = ParseNumber<double>(key, v);
          },
          [member](const RunConfig& c) { return c.*member ? text::FormatDouble(*(c.*member)) : "auto"; }};
}

Field IntListField(std::string key, std::vector<int> RunConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = ParseIntList(key, v); },
          [member](const RunConfig& c) { return IntList(c.*member); }};
}

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      String("experiment", &RunConfig::experiment),
      Number("seed", &RunConfig::seed),
      String("records", &RunConfig::records),
      String("ties", &RunConfig::ties),
      String("venues", &RunConfig::venues),
      String("stopwords", &RunConfig::stopwords),
      Number("min_token_length", &RunConfig::min_token_length),
      Number("min_word_frequency", &RunConfig::min_word_frequency),
      Number("C", &RunConfig::communities),
      Number("Z", &RunConfig::topics),
      AutoNumber("alpha", &RunConfig::alpha),
      Number("beta", &RunConfig::beta),
      AutoNumber("gamma", &RunConfig::gamma),
      Number("eta", &RunConfig::eta),
      Number("iterations", &RunConfig::iterations),
      Number("burn_in", &RunConfig::burn_in),
      Number("lag", &RunConfig::lag),
      {"z_conditional",
       [](RunConfig& c, std::string_view v) {
         v = text::Trim(v);
         if (v == "collapsed") c.z_conditional = TopicConditional::kCollapsed;
         else if (v == "literal") c.z_conditional = TopicConditional::kLiteral;
         else BadValue("z_conditional", v, "collapsed or literal");
       },
       [](const RunConfig& c) {
         return std::string(c.z_conditional == TopicConditional::kCollapsed ? "collapsed" : "literal");
       }},
      Number("train_fraction", &RunConfig::train_fraction),
      Flag("simulate", &RunConfig::simulate),
      Number("swap_fraction", &RunConfig::swap_fraction),
      {"swap_mode",
       [](RunConfig& c, std::string_view v) {
         try {
           c.swap_mode = ParseSwapMode(text::Trim(v));
         } catch (const Error&) {
           BadValue("swap_mode", v, "both, venue or ugc");
         }
       },
       [](const RunConfig& c) { return std::string(SwapModeName(c.swap_mode)); }},
      Number("reference_count", &RunConfig::reference_count),
      {"prior",
       [](RunConfig& c, std::string_view v) {
         v = text::Trim(v);
         if (v == "empirical") c.uniform_prior = false;
         else if (v == "uniform") c.uniform_prior = true;
         else BadValue("prior", v, "empirical or uniform");
       },
       [](const RunConfig& c) { return std::string(c.uniform_prior ? "uniform" : "empirical"); }},
      Number("threshold_lo", &RunConfig::threshold_lo),
      Number("threshold_hi", &RunConfig::threshold_hi),
      Number("threshold_step", &RunConfig::threshold_step),
      Flag("augment", &RunConfig::augment),
      Nested("augment.topics", &RunConfig::augment_lda, &LdaConfig::topics),
      Nested("augment.lda_iterations", &RunConfig::augment_lda, &LdaConfig::iterations),
      Nested("augment.lda_alpha", &RunConfig::augment_lda, &LdaConfig::alpha),
      Nested("augment.dim_users", &RunConfig::tucker, &TuckerConfig::dim_users),
      Nested("augment.dim_venues", &RunConfig::tucker, &TuckerConfig::dim_venues),
      Nested("augment.dim_topics", &RunConfig::tucker, &TuckerConfig::dim_topics),
      Nested("augment.lambda", &RunConfig::tucker, &TuckerConfig::lambda),
      Nested("augment.iterations", &RunConfig::tucker, &TuckerConfig::iterations),
      Nested("augment.learning_rate", &RunConfig::tucker, &TuckerConfig::learning_rate),
      Nested("augment.init_scale", &RunConfig::tucker, &TuckerConfig::init_scale),
      {"augment.social",
       [](RunConfig& c, std::string_view v) {
         v = text::Trim(v);
         if (v == "printed") c.tucker.social = SocialForm::kPrinted;
         else if (v == "difference") c.tucker.social = SocialForm::kDifference;
         else BadValue("augment.social", v, "printed or difference");
       },
       [](const RunConfig& c) {
         return std::string(c.tucker.social == SocialForm::kPrinted ? "printed" : "difference");
       }},
      Number("augment.top_k", &RunConfig::augment_top_k),
      Number("augment.words", &RunConfig::augment_words),
      Number("kde.mix_alpha", &RunConfig::kde_mix_alpha),
      Number("kde.floor_km", &RunConfig::kde_floor_km),
      Nested("mf.rank", &RunConfig::mf, &MfConfig::rank),
      Nested("mf.lambda1", &RunConfig::mf, &MfConfig::lambda1),
      Nested("mf.lambda2", &RunConfig::mf, &MfConfig::lambda2),
      Nested("mf.learning_rate", &RunConfig::mf, &MfConfig::learning_rate),
      Nested("mf.epochs", &RunConfig::mf, &MfConfig::epochs),
      Nested("lda.topics", &RunConfig::lda, &LdaConfig::topics),
      Nested("lda.iterations", &RunConfig::lda, &LdaConfig::iterations),
      Nested("lda.beta", &RunConfig::lda, &LdaConfig::beta),
      Nested("lda.fold_in_passes", &RunConfig::lda, &LdaConfig::fold_in_passes),
      Number("fused.grid", &RunConfig::fused_grid),
      IntListField("grid.C", &RunConfig::grid_c),
      IntListField("grid.Z", &RunConfig::grid_z),
      IntListField("latency.k", &RunConfig::latency_k),
      String("latency.blocks", &RunConfig::latency_blocks),
      Number("window.size", &RunConfig::window_size),
      Number("window.step", &RunConfig::window_step),
      Number("window.admission", &RunConfig::window_admission),
      Flag("window.admit_all", &RunConfig::window_admit_all),
      Nested("synth.users", &RunConfig::synth, &SynthConfig::users),
      Nested("synth.venues", &RunConfig::synth, &SynthConfig::venues),
      Nested("synth.words", &RunConfig::synth, &SynthConfig::words),
      Nested("synth.C", &RunConfig::synth, &SynthConfig::communities),
      Nested("synth.Z", &RunConfig::synth, &SynthConfig::topics),
      Nested("synth.alpha", &RunConfig::synth, &SynthConfig::alpha),
      Nested("synth.beta", &RunConfig::synth, &SynthConfig::beta),
      Nested("synth.gamma", &RunConfig::synth, &SynthConfig::gamma),
      Nested("synth.eta", &RunConfig::synth, &SynthConfig::eta),
      SynthString("synth.behaviors_per_user", &SynthConfig::behaviors_per_user),
      SynthString("synth.words_per_tip", &SynthConfig::words_per_tip),
      Nested("synth.friends_per_user", &RunConfig::synth, &SynthConfig::friends_per_user),
      Nested("synth.homophily", &RunConfig::synth, &SynthConfig::homophily),
      Nested("synth.drift_after", &RunConfig::synth, &SynthConfig::drift_after),
  };
  return fields;
}

void Check(bool ok, const std::string& message) {
  if (!ok) Fail(ErrorKind::kConfig, message);
}

}  // namespace

Hyperparams RunConfig::Hyper() const {
  Hyperparams h = Hyperparams::Defaults(communities, topics);
  if (alpha) h.alpha = *alpha;
  if (gamma) h.gamma = *gamma;
  h.beta = beta;
  h.eta = eta;
  return h;
}

TrainSchedule RunConfig::Schedule() const {
  TrainSchedule s;
  s.iterations = iterations;
  s.burn_in = burn_in;
  s.lag = lag;
  s.form = z_conditional;
  return s;
}

GeneratorConfig RunConfig::Generator() const {
  GeneratorConfig g;
  g.hyper.communities = synth.communities;
  g.hyper.topics = synth.topics;
  g.hyper.alpha = synth.alpha;
  g.hyper.beta = synth.beta;
  g.hyper.gamma = synth.gamma;
  g.hyper.eta = synth.eta;
  g.users = synth.users;
  g.venues = synth.venues;
  g.words = synth.words;
  g.behaviors_per_user = CountDistribution::Parse(synth.behaviors_per_user, 1);
  g.words_per_tip = CountDistribution::Parse(synth.words_per_tip, 0);
  g.friends_per_user = synth.friends_per_user;
  g.homophily = synth.homophily;
  g.drift_after = synth.drift_after;
  return g;
}

void RunConfig::Set(std::string_view key, std::string_view value) {
  key = text::Trim(key);
  for (const auto& field : Fields()) {
    if (field.key == key) {
      field.set(*this, value);
      return;
    }
  }
  Fail(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::Items() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& field : Fields()) out.emplace_back(field.key, field.get(*this));
  return out;
}

void RunConfig::Validate() const {
  static const std::vector<std::string> experiments = {"main", "grid", "latency", "robustness", "windowed",
                                                       "baselines"};
  Check(std::find(experiments.begin(), experiments.end(), experiment) != experiments.end(),
        "experiment must be one of main, grid, latency, robustness, windowed, baselines");
  Check(min_token_length >= 1, "min_token_length must be at least 1");
  Check(min_word_frequency >= 1, "min_word_frequency must be at least 1");
  Check(communities >= 1 && topics >= 1, "C and Z must be at least 1");
  Check(!alpha || *alpha > 0.0, "alpha must be positive");
  Check(!gamma || *gamma > 0.0, "gamma must be positive");
  Check(beta > 0.0 && eta > 0.0, "beta and eta must be positive");
  Check(burn_in >= 0 && iterations > burn_in, "iterations must exceed burn_in");
  Check(lag >= 1, "lag must be at least 1");
  Check(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must lie in (0, 1)");
  Check(swap_fraction > 0.0 && swap_fraction < 1.0, "swap_fraction must lie in (0, 1)");
  Check(reference_count >= 1, "reference_count must be at least 1");
  Check(threshold_lo < threshold_hi, "threshold_lo must be below threshold_hi");
  Check(threshold_step > 0.0, "threshold_step must be positive");
  Check(augment_lda.topics >= 1 && augment_lda.iterations >= 0, "augment LDA settings out of range");
  Check(tucker.dim_users >= 1 && tucker.dim_venues >= 1 && tucker.dim_topics >= 1,
        "augment core dimensions must be at least 1");
  Check(tucker.dim_topics <= augment_lda.topics, "augment.dim_topics cannot exceed augment.topics");
  Check(tucker.lambda >= 0.0 && tucker.learning_rate > 0.0 && tucker.iterations >= 0,
        "augment optimizer settings out of range");
  Check(augment_top_k >= 0 && augment_words >= 1, "augment.top_k and augment.words out of range");
  Check(kde_mix_alpha >= 0.0 && kde_mix_alpha <= 1.0, "kde.mix_alpha must lie in [0, 1]");
  Check(kde_floor_km > 0.0, "kde.floor_km must be positive");
  Check(mf.rank >= 1 && mf.learning_rate > 0.0 && mf.epochs >= 0 && mf.lambda1 >= 0.0 && mf.lambda2 >= 0.0,
        "mf settings out of range");
  Check(lda.topics >= 2 && lda.iterations >= 0 && lda.beta > 0.0 && lda.fold_in_passes >= 1,
        "lda settings out of range");
  Check(fused_grid >= 1, "fused.grid must be at least 1");
  Check(!grid_c.empty() && !grid_z.empty(), "grid.C and grid.Z must be non-empty");
  for (int c : grid_c) Check(c >= 1, "grid.C values must be at least 1");
  for (int z : grid_z) Check(z >= 1, "grid.Z values must be at least 1");
  Check(!latency_k.empty(), "latency.k must be non-empty");
  for (int k : latency_k) Check(k >= 1, "latency.k values must be at least 1");
  Check(latency_blocks == "case" || latency_blocks == "history" || latency_blocks == "test",
        "latency.blocks must be case, history or test");
  Check(window_size > 0.0 && window_size < 1.0, "window.size must lie in (0, 1)");
  Check(window_step > 0.0 && window_step < 1.0, "window.step must lie in (0, 1)");
  Check(window_admission > 0.0 && window_admission <= 1.0, "window.admission must lie in (0, 1]");
  Check(synth.users >= 1 && synth.venues >= 1 && synth.words >= 1 && synth.communities >= 1 &&
            synth.topics >= 1,
        "synth counts must be at least 1");
  Check(synth.alpha > 0.0 && synth.beta > 0.0 && synth.gamma > 0.0 && synth.eta > 0.0,
        "synth priors must be positive");
  Check(synth.friends_per_user >= 0, "synth.friends_per_user must be non-negative");
  Check(synth.homophily >= 0.0 && synth.homophily <= 1.0, "synth.homophily must lie in [0, 1]");
  Check(synth.drift_after >= 0.0 && synth.drift_after < 1.0, "synth.drift_after must lie in [0, 1)");
  try {
    CountDistribution::Parse(synth.behaviors_per_user, 1);
    CountDistribution::Parse(synth.words_per_tip, 0);
  } catch (const Error& e) {
    Fail(ErrorKind::kConfig, e.what());
  }
}

void ApplyConfigText(RunConfig& config, std::string_view body, const std::string& origin) {
  std::size_t line_no = 0;
  for (auto line : text::SplitView(body, '\n')) {
    ++line_no;
    line = text::Trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      Fail(ErrorKind::kConfig, origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    config.Set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void ApplyConfigFile(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kConfig, "cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string body = buffer.str();
  if (path.extension() == ".json") {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorKind::kConfig, path.string() + ": " + e.what());
    }
    if (!doc.contains("config") || !doc["config"].is_object()) {
      Fail(ErrorKind::kConfig, path.string() + ": no \"config\" object");
    }
    for (const auto& [key, value] : doc["config"].items()) {
      if (!value.is_string()) Fail(ErrorKind::kConfig, path.string() + ": config values must be strings");
      config.Set(key, value.get<std::string>());
    }
    return;
  }
  ApplyConfigText(config, body, path.string());
}

void ApplySeedEnvironment(RunConfig& config) {
  if (const char* env = std::getenv("CBM_SEED"); env != nullptr && *env != '\0') config.Set("seed", env);
}

std::string ConfigText(const RunConfig& config) {
  std::string out;
  for (const auto& [key, value] : config.Items()) out += key + " = " + value + "\n";
  return out;
}

}  // namespace cbm
