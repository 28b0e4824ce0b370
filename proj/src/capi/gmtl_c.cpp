#include "gmtl/gmtl.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "gmtl/config.hpp"
#include "gmtl/error.hpp"
#include "gmtl/experiment.hpp"
#include "gmtl/model.hpp"
#include "gmtl/retrieval.hpp"
#include "gmtl/training.hpp"

struct gmtl_config {
  nlohmann::ordered_json doc;
};

struct gmtl_model {
  gmtl::MtlModel model;
};

struct gmtl_index {
  gmtl::LshIndex index;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
int guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return GMTL_OK;
  } catch (const gmtl::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GMTL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GMTL_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  gmtl::require(p != nullptr, gmtl::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

gmtl::ExperimentConfig resolve(const gmtl_config* config) {
  gmtl::ExperimentConfig c = gmtl::experiment_from_json(config->doc);
  c.validate();
  return c;
}

}  // namespace

extern "C" {

const char* gmtl_version(void) { return "1.0.0"; }

const char* gmtl_status_name(int status) {
  if (status == GMTL_OK) return "ok";
  if (status < GMTL_ERR_INVALID_ARGUMENT || status > GMTL_ERR_INTERNAL) return "unknown";
  return gmtl::error_code_name(static_cast<gmtl::ErrorCode>(status));
}

const char* gmtl_last_error(void) { return g_last_error.c_str(); }

void gmtl_string_free(char* s) { std::free(s); }

int gmtl_config_load(const char* path, gmtl_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto config = std::make_unique<gmtl_config>();
    config->doc = nlohmann::ordered_json::object();
    if (path != nullptr && *path != '\0') {
      std::ifstream in(path);
      gmtl::require(static_cast<bool>(in), gmtl::ErrorCode::kNotFound, std::string("config file not found: ") + path);
      try {
        config->doc = nlohmann::ordered_json::parse(in, nullptr, true, true);
      } catch (const nlohmann::json::exception& e) {
        gmtl::fail(gmtl::ErrorCode::kConfig, std::string("config: ") + path + " is not valid JSON: " + e.what());
      }
    }
    (void)gmtl::experiment_from_json(config->doc);
    *out = config.release();
  });
}

int gmtl_config_set(gmtl_config* config, const char* assignment) {
  return guarded([&] {
    need(config, "config");
    need(assignment, "assignment");
    nlohmann::ordered_json doc = config->doc;
    gmtl::apply_override(doc, assignment);
    (void)gmtl::experiment_from_json(doc);
    config->doc = std::move(doc);
  });
}

int gmtl_config_dump(const gmtl_config* config, char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(json_out, "json_out");
    *json_out = copy_string(gmtl::experiment_to_json(resolve(config)).dump(2) + "\n");
  });
}

int gmtl_config_default_run_dir(const gmtl_config* config, char** dir_out) {
  return guarded([&] {
    need(config, "config");
    need(dir_out, "dir_out");
    *dir_out = copy_string(gmtl::default_run_dir(resolve(config)));
  });
}

void gmtl_config_free(gmtl_config* config) { delete config; }

int gmtl_run(const gmtl_config* config, const char* subcommand, const char* run_dir,
             char** run_dir_out, char** warnings_out) {
  return guarded([&] {
    need(config, "config");
    need(subcommand, "subcommand");
    if (run_dir_out) *run_dir_out = nullptr;
    if (warnings_out) *warnings_out = nullptr;
    const gmtl::ExperimentConfig c = resolve(config);
    const std::string dir = run_dir && *run_dir ? std::string(run_dir) : gmtl::default_run_dir(c);
    const gmtl::RunSummary summary = gmtl::run_subcommand(subcommand, c, dir);
    std::string warnings;
    for (const std::string& w : summary.warnings) warnings += w + "\n";
    if (run_dir_out) *run_dir_out = copy_string(summary.run_dir);
    if (warnings_out) *warnings_out = copy_string(warnings);
  });
}

int gmtl_model_load(const char* path, gmtl_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new gmtl_model{gmtl::MtlModel::load(path)};
  });
}

int gmtl_model_dims(const gmtl_model* model, size_t* item_dim, size_t* embed_dim) {
  return guarded([&] {
    need(model, "model");
    const auto& c = model->model.encoder().config();
    if (item_dim) *item_dim = c.item_dim;
    if (embed_dim) *embed_dim = c.embed_dim;
  });
}

int gmtl_model_embed(const gmtl_model* model, const double* items, size_t n_items, size_t item_dim,
                     double* out) {
  return guarded([&] {
    need(model, "model");
    need(items, "items");
    need(out, "out");
    gmtl::require(n_items >= 1, gmtl::ErrorCode::kInvalidArgument, "gallery has no items");
    gmtl::require(item_dim == model->model.encoder().config().item_dim, gmtl::ErrorCode::kShape,
                  "item width " + std::to_string(item_dim) + " does not match the model's " +
                      std::to_string(model->model.encoder().config().item_dim));
    gmtl::Gallery g{item_dim, std::vector<double>(items, items + n_items * item_dim)};
    const gmtl::Gallery* galleries[] = {&g};
    const gmtl::Tensor e = gmtl::embed_galleries(model->model.encoder(), galleries);
    std::memcpy(out, e.data().data(), e.numel() * sizeof(double));
  });
}

void gmtl_model_free(gmtl_model* model) { delete model; }

int gmtl_index_build(const char* const* ids, const double* vectors, size_t n, size_t dim, size_t tables,
                     size_t hashes, double width, uint64_t seed, gmtl_index** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    if (n > 0) {
      need(ids, "ids");
      need(vectors, "vectors");
    }
    std::vector<std::string> names;
    for (size_t i = 0; i < n; ++i) {
      need(ids[i], "id");
      names.emplace_back(ids[i]);
    }
    std::vector<double> data(vectors, vectors + n * dim);
    gmtl::LshParams params{tables, hashes, width, seed};
    *out = new gmtl_index{gmtl::LshIndex::build(std::move(names), std::move(data), dim, params)};
  });
}

int gmtl_index_load(const char* path, gmtl_index** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new gmtl_index{gmtl::LshIndex::load(path)};
  });
}

int gmtl_index_save(const gmtl_index* index, const char* path) {
  return guarded([&] {
    need(index, "index");
    need(path, "path");
    index->index.save(path);
  });
}

int gmtl_index_size(const gmtl_index* index, size_t* n, size_t* dim) {
  return guarded([&] {
    need(index, "index");
    if (n) *n = index->index.size();
    if (dim) *dim = index->index.dim();
  });
}

int gmtl_index_query(const gmtl_index* index, const double* seeds, size_t n_seeds, size_t dim, size_t k,
                     const char** ids_out, double* distances_out, size_t* count_out) {
  return guarded([&] {
    need(index, "index");
    need(seeds, "seeds");
    need(count_out, "count_out");
    *count_out = 0;
    std::vector<std::vector<double>> rows;
    for (size_t s = 0; s < n_seeds; ++s) rows.emplace_back(seeds + s * dim, seeds + (s + 1) * dim);
    const auto hits = index->index.query_seeds(rows, k);
    for (size_t i = 0; i < hits.size(); ++i) {
      if (ids_out) ids_out[i] = index->index.ids()[*index->index.find(hits[i].id)].c_str();
      if (distances_out) distances_out[i] = hits[i].distance;
    }
    *count_out = hits.size();
  });
}

void gmtl_index_free(gmtl_index* index) { delete index; }

}  // extern "C"
