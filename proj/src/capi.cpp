#include "cbm/cbm.h"

#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "cbm/batch.hpp"
#include "cbm/config.hpp"
#include "cbm/error.hpp"
#include "cbm/experiment.hpp"
#include "cbm/scoring.hpp"

struct cbm_config {
  cbm::RunConfig value;
};

struct cbm_corpus {
  cbm::Corpus value;
};

struct cbm_model {
  cbm::CbmModel value;
};

namespace {

thread_local std::string last_error;

cbm_status StatusOf(cbm::ErrorKind kind) {
  switch (kind) {
    case cbm::ErrorKind::kConfig: return CBM_ERR_CONFIG;
    case cbm::ErrorKind::kInvalidArgument: return CBM_ERR_INVALID_ARGUMENT;
    case cbm::ErrorKind::kInput: return CBM_ERR_INPUT;
    case cbm::ErrorKind::kIo: return CBM_ERR_IO;
    case cbm::ErrorKind::kMismatch: return CBM_ERR_MISMATCH;
    case cbm::ErrorKind::kRuntime: return CBM_ERR_RUNTIME;
  }
  return CBM_ERR_RUNTIME;
}

template <typename F>
cbm_status Guard(F&& fn) {
  try {
    fn();
    last_error.clear();
    return CBM_OK;
  } catch (const cbm::Error& e) {
    last_error = e.what();
    return StatusOf(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return CBM_ERR_RUNTIME;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CBM_ERR_RUNTIME;
  }
}

void NotNull(const void* p, const char* what) {
  if (p == nullptr) cbm::Fail(cbm::ErrorKind::kInvalidArgument, std::string(what) + " is null");
}

char* Copy(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* cbm_version(void) { return "1.0.0"; }

const char* cbm_last_error(void) { return last_error.c_str(); }

void cbm_string_free(char* s) { std::free(s); }

cbm_status cbm_config_new(cbm_config** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = new cbm_config();
  });
}

void cbm_config_free(cbm_config* config) { delete config; }

cbm_status cbm_config_set(cbm_config* config, const char* key, const char* value) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(key, "key");
    NotNull(value, "value");
    config->value.Set(key, value);
  });
}

cbm_status cbm_config_load(cbm_config* config, const char* path) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(path, "path");
    cbm::ApplyConfigFile(config->value, path);
  });
}

cbm_status cbm_config_apply_env(cbm_config* config) {
  return Guard([&] {
    NotNull(config, "config");
    cbm::ApplySeedEnvironment(config->value);
  });
}

cbm_status cbm_config_validate(const cbm_config* config) {
  return Guard([&] {
    NotNull(config, "config");
    config->value.Validate();
  });
}

cbm_status cbm_config_text(const cbm_config* config, char** out) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out, "out");
    *out = Copy(cbm::ConfigText(config->value));
  });
}

cbm_status cbm_synth(const cbm_config* config, const char* out_dir, size_t* behaviors) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out_dir, "out_dir");
    const auto out = cbm::Synthesize(config->value, out_dir);
    if (behaviors) *behaviors = out.behaviors;
  });
}

cbm_status cbm_run(const cbm_config* config, const char* out_dir, char** summary) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out_dir, "out_dir");
    const auto output = cbm::RunExperiment(config->value);
    cbm::WriteOutput(output, out_dir);
    if (summary) *summary = Copy(output.summary);
  });
}

cbm_status cbm_corpus_load(const cbm_config* config, cbm_corpus** out) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out, "out");
    auto data = cbm::LoadDataset(config->value);
    *out = new cbm_corpus{std::move(data.corpus)};
  });
}

void cbm_corpus_free(cbm_corpus* corpus) { delete corpus; }

size_t cbm_corpus_size(const cbm_corpus* corpus) { return corpus ? corpus->value.behaviors.size() : 0; }

cbm_status cbm_corpus_stats(const cbm_corpus* corpus, char** out) {
  return Guard([&] {
    NotNull(corpus, "corpus");
    NotNull(out, "out");
    *out = Copy(cbm::StatsText(cbm::ComputeStats(corpus->value)));
  });
}

cbm_status cbm_model_load(const char* path, cbm_model** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new cbm_model{cbm::LoadModel(path)};
  });
}

void cbm_model_free(cbm_model* model) { delete model; }

cbm_status cbm_model_hash(const cbm_model* model, char** out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    *out = Copy(cbm::HashHex(model->value.tables_hash()));
  });
}

cbm_status cbm_model_log_likelihood(const cbm_model* model, int user, int venue, const int* words, size_t count,
                                    double* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    if (count > 0) NotNull(words, "words");
    const auto& m = model->value;
    cbm::Require(user >= 0 && user < m.num_users(), "user id out of range");
    cbm::Require(venue >= 0 && venue < m.num_venues(), "venue id out of range");
    for (size_t i = 0; i < count; ++i) cbm::Require(words[i] >= 0 && words[i] < m.num_words(), "word id out of range");
    *out = cbm::LogLikelihood(m, user, venue, std::span<const int>(words, count));
  });
}

cbm_status cbm_score(const cbm_model* model, const cbm_config* config, const char* records, const char* out_path,
                     int latency, const char* expected_hash, size_t* rows, size_t* row_errors) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(config, "config");
    NotNull(records, "records");
    NotNull(out_path, "out_path");
    if (expected_hash) cbm::CheckTablesHash(model->value, expected_hash);
    const auto scores = cbm::ScoreRecords(model->value, config->value, records, latency);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) cbm::Fail(cbm::ErrorKind::kIo, std::string("cannot write ") + out_path);
    out << scores.text;
    if (!out) cbm::Fail(cbm::ErrorKind::kIo, std::string("failed writing ") + out_path);
    if (rows) *rows = scores.rows;
    if (row_errors) *row_errors = scores.errors;
  });
}

}  // extern "C"
