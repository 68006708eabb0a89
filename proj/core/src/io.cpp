// CSV/JSON ingestion, output writers, and the batch command entry points.

#include "tdglm/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "tdglm/diagnostics.hpp"

namespace tdglm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CsvFile {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string stamp;  // leading comment line, if any
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvFile read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  CsvFile csv;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (csv.stamp.empty()) csv.stamp = line;
      continue;
    }
    if (!have_header) {
      csv.header = split_csv_line(line);
      have_header = true;
    } else {
      csv.rows.push_back(split_csv_line(line));
    }
  }
  if (!have_header) throw std::runtime_error("no header row in " + path.string());
  return csv;
}

double parse_double(const std::string& cell, std::size_t row,
                    const std::string& col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw std::runtime_error("row " + std::to_string(row + 1) + ", column " +
                             col + ": not numeric: '" + cell + "'");
  }
  return v;
}

long find_column(const CsvFile& csv, const std::string& name) {
  for (std::size_t i = 0; i < csv.header.size(); ++i) {
    if (csv.header[i] == name) return static_cast<long>(i);
  }
  return -1;
}

long require_column(const CsvFile& csv, const std::string& name,
                    const fs::path& path) {
  const long i = find_column(csv, name);
  if (i < 0) {
    throw std::runtime_error("missing required column '" + name + "' in " +
                             path.string());
  }
  return i;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string stamp_line(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed);
}

json hyper_to_json(const Hyperparameters& h) {
  return json{{"a_xi", h.a_xi},
              {"b_xi", h.b_xi},
              {"sigma2_beta_fixed", h.sigma2_beta_fixed},
              {"sigma2_gamma_fixed", h.sigma2_gamma_fixed},
              {"a_sigma", h.a_sigma},
              {"b_sigma", h.b_sigma},
              {"a_phis", h.a_phis},
              {"b_phis", h.b_phis},
              {"nu", h.nu},
              {"nu0", h.nu0},
              {"a_sigma_beta", h.a_sigma_beta},
              {"b_sigma_beta", h.b_sigma_beta},
              {"a_sigma_gamma", h.a_sigma_gamma},
              {"b_sigma_gamma", h.b_sigma_gamma},
              {"fdr_alpha", h.fdr_alpha},
              {"fdr_c", h.fdr_c},
              {"iters", h.iters},
              {"burnin", h.burnin},
              {"thin", h.thin},
              {"tau_mean0", h.tau_mean0},
              {"tau_disp0", h.tau_disp0},
              {"step_xi0", h.step_xi0},
              {"step_phis0", h.step_phis0},
              {"target_mala", h.target_mala},
              {"target_rw", h.target_rw},
              {"adapt_window", h.adapt_window},
              {"precond_refresh", h.precond_refresh},
              {"offset_sign", h.offset_sign},
              {"disp_grad_numeric", h.disp_grad_numeric},
              {"freeze_spatial_at_zero", h.freeze_spatial_at_zero}};
}

void hyper_from_json(const json& j, Hyperparameters& h) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("a_xi", h.a_xi);
  get("b_xi", h.b_xi);
  get("sigma2_beta_fixed", h.sigma2_beta_fixed);
  get("sigma2_gamma_fixed", h.sigma2_gamma_fixed);
  get("a_sigma", h.a_sigma);
  get("b_sigma", h.b_sigma);
  get("a_phis", h.a_phis);
  get("b_phis", h.b_phis);
  get("nu", h.nu);
  get("nu0", h.nu0);
  get("a_sigma_beta", h.a_sigma_beta);
  get("b_sigma_beta", h.b_sigma_beta);
  get("a_sigma_gamma", h.a_sigma_gamma);
  get("b_sigma_gamma", h.b_sigma_gamma);
  get("fdr_alpha", h.fdr_alpha);
  get("fdr_c", h.fdr_c);
  get("iters", h.iters);
  get("burnin", h.burnin);
  get("thin", h.thin);
  get("tau_mean0", h.tau_mean0);
  get("tau_disp0", h.tau_disp0);
  get("step_xi0", h.step_xi0);
  get("step_phis0", h.step_phis0);
  get("target_mala", h.target_mala);
  get("target_rw", h.target_rw);
  get("adapt_window", h.adapt_window);
  get("precond_refresh", h.precond_refresh);
  get("offset_sign", h.offset_sign);
  get("disp_grad_numeric", h.disp_grad_numeric);
  get("freeze_spatial_at_zero", h.freeze_spatial_at_zero);
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  json j;
  in >> j;
  return j;
}

// name lookup for summary/selection rows; falls back to canonical indices
std::string pretty_name(const std::string& column,
                        const std::vector<std::string>& x_names,
                        const std::vector<std::string>& z_names,
                        const std::vector<std::string>& site_ids,
                        std::string* family) {
  auto split = [&](const std::string& prefix,
                   const std::vector<std::string>& names) -> std::string {
    const std::string key = prefix + ".";
    if (column.rfind(key, 0) != 0) return {};
    const std::size_t idx = std::stoul(column.substr(key.size())) - 1;
    *family = prefix;
    if (idx < names.size()) return names[idx];
    return column.substr(key.size());
  };
  std::string n;
  if (!(n = split("beta", x_names)).empty()) return n;
  if (!(n = split("gamma", z_names)).empty()) return n;
  if (!(n = split("w", site_ids)).empty()) return n;
  *family = column;
  return column;
}

struct SummaryWriterInput {
  const Eigen::MatrixXd& draws;              // pooled, chain columns only
  const std::vector<std::string>& columns;   // canonical names
  const Eigen::VectorXd& log_posterior;
  const std::vector<std::string>& x_names;
  const std::vector<std::string>& z_names;
  const std::vector<std::string>& site_ids;
  bool spatial;
};

std::string render_summary_csv(const SummaryWriterInput& in,
                               const std::string& stamp) {
  std::string out = stamp + "\n";
  out += "parameter,name,map,median,mean,sd,hpd_lower,hpd_upper\n";
  auto emit = [&](const std::string& family, const std::string& name,
                  const Eigen::VectorXd& draws) {
    const PosteriorSummary s = summarize(draws, in.log_posterior);
    out += family + "," + name + "," + format_double(s.map_estimate) + "," +
           format_double(s.median) + "," + format_double(s.mean) + "," +
           format_double(s.sd) + "," + format_double(s.hpd_lower) + "," +
           format_double(s.hpd_upper) + "\n";
  };
  for (std::size_t c = 0; c < in.columns.size(); ++c) {
    std::string family;
    const std::string name =
        pretty_name(in.columns[c], in.x_names, in.z_names, in.site_ids, &family);
    emit(family, name, in.draws.col(static_cast<Eigen::Index>(c)));
  }
  if (in.spatial) {
    // recovered intercept and mean-adjusted surface
    std::vector<Eigen::Index> wcols;
    for (std::size_t c = 0; c < in.columns.size(); ++c) {
      if (in.columns[c].rfind("w.", 0) == 0) {
        wcols.push_back(static_cast<Eigen::Index>(c));
      }
    }
    if (!wcols.empty()) {
      Eigen::MatrixXd w_draws(in.draws.rows(),
                              static_cast<Eigen::Index>(wcols.size()));
      for (std::size_t j = 0; j < wcols.size(); ++j) {
        w_draws.col(static_cast<Eigen::Index>(j)) = in.draws.col(wcols[j]);
      }
      auto [beta0, centered] = hierarchical_center(w_draws);
      emit("beta0", "beta0", beta0);
      for (std::size_t j = 0; j < wcols.size(); ++j) {
        const std::string site = j < in.site_ids.size()
                                     ? in.site_ids[j]
                                     : std::to_string(j + 1);
        emit("w_centered", site, centered.col(static_cast<Eigen::Index>(j)));
      }
    }
  }
  return out;
}

std::string parse_stamp(const std::string& stamp, std::uint64_t* seed) {
  // "# config_hash=<hex> seed=<n>"
  std::string hash;
  const auto hpos = stamp.find("config_hash=");
  if (hpos != std::string::npos) {
    const auto end = stamp.find(' ', hpos);
    hash = stamp.substr(hpos + 12, end - (hpos + 12));
  }
  const auto spos = stamp.find("seed=");
  if (seed != nullptr && spos != std::string::npos) {
    *seed = std::stoull(stamp.substr(spos + 5));
  }
  return hash;
}

struct FitMeta {
  std::string model;
  std::vector<std::string> x_names, z_names, site_ids;
  Hyperparameters hyper;
  std::uint64_t seed = 0;
  std::string config_hash;
};

FitMeta read_meta(const fs::path& dir) {
  const json j = load_json_file(dir / "meta.json");
  FitMeta m;
  m.model = j.at("model").get<std::string>();
  m.x_names = j.at("x_names").get<std::vector<std::string>>();
  m.z_names = j.at("z_names").get<std::vector<std::string>>();
  m.site_ids = j.at("site_ids").get<std::vector<std::string>>();
  hyper_from_json(j.at("hyper"), m.hyper);
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  return m;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

Dataset load_dataset(const fs::path& data_path,
                     const std::optional<fs::path>& coords_path) {
  const CsvFile csv = read_csv(data_path);
  const long y_col = require_column(csv, "y", data_path);
  const long t_col = require_column(csv, "exposure", data_path);
  const long loc_col = require_column(csv, "location_id", data_path);

  std::vector<long> x_cols, z_cols;
  std::vector<std::string> x_names, z_names;
  for (std::size_t i = 0; i < csv.header.size(); ++i) {
    const std::string& h = csv.header[i];
    if (h == "y" || h == "exposure" || h == "location_id") continue;
    if (h.rfind("x_", 0) == 0) {
      x_cols.push_back(static_cast<long>(i));
      x_names.push_back(h);
    } else if (h.rfind("z_", 0) == 0) {
      z_cols.push_back(static_cast<long>(i));
      z_names.push_back(h);
    } else {
      throw std::runtime_error("unrecognized column '" + h + "' in " +
                               data_path.string() +
                               " (covariates need an x_ or z_ prefix)");
    }
  }

  // site index: coords-file order when given, else first appearance
  std::vector<std::string> site_ids;
  std::map<std::string, int> site_index;
  std::optional<SpatialDomain> domain;
  if (coords_path.has_value()) {
    const CsvFile cc = read_csv(*coords_path);
    const long sid = require_column(cc, "site_id", *coords_path);
    const long sx = require_column(cc, "x", *coords_path);
    const long sy = require_column(cc, "y", *coords_path);
    Eigen::MatrixXd coords(static_cast<Eigen::Index>(cc.rows.size()), 2);
    for (std::size_t r = 0; r < cc.rows.size(); ++r) {
      const std::string& id = cc.rows[r][static_cast<std::size_t>(sid)];
      if (site_index.count(id) > 0) {
        throw std::runtime_error("duplicate site_id '" + id + "' in " +
                                 coords_path->string());
      }
      site_index[id] = static_cast<int>(r);
      site_ids.push_back(id);
      coords(static_cast<Eigen::Index>(r), 0) =
          parse_double(cc.rows[r][static_cast<std::size_t>(sx)], r, "x");
      coords(static_cast<Eigen::Index>(r), 1) =
          parse_double(cc.rows[r][static_cast<std::size_t>(sy)], r, "y");
    }
    domain.emplace(std::move(coords));
  }

  const std::size_t n = csv.rows.size();
  Eigen::VectorXd y(n), t(n);
  Eigen::VectorXi loc(n);
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(x_cols.size()));
  Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(z_cols.size()));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != csv.header.size()) {
      throw std::runtime_error("row " + std::to_string(r + 1) + " in " +
                               data_path.string() + ": cell count mismatch");
    }
    y[static_cast<Eigen::Index>(r)] =
        parse_double(row[static_cast<std::size_t>(y_col)], r, "y");
    t[static_cast<Eigen::Index>(r)] =
        parse_double(row[static_cast<std::size_t>(t_col)], r, "exposure");
    const std::string& key = row[static_cast<std::size_t>(loc_col)];
    auto it = site_index.find(key);
    if (it == site_index.end()) {
      if (coords_path.has_value()) {
        throw std::runtime_error("row " + std::to_string(r + 1) +
                                 ": location '" + key +
                                 "' not present in coords file");
      }
      it = site_index.emplace(key, static_cast<int>(site_ids.size())).first;
      site_ids.push_back(key);
    }
    loc[static_cast<Eigen::Index>(r)] = it->second;
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_double(row[static_cast<std::size_t>(x_cols[j])], r, x_names[j]);
    }
    for (std::size_t j = 0; j < z_cols.size(); ++j) {
      Z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_double(row[static_cast<std::size_t>(z_cols[j])], r, z_names[j]);
    }
  }

  ObservationSet obs(std::move(y), std::move(t), std::move(loc), std::move(X),
                     std::move(Z), static_cast<Eigen::Index>(site_ids.size()));
  return Dataset{std::move(obs), std::move(domain), std::move(x_names),
                 std::move(z_names), std::move(site_ids)};
}

void write_dataset(const fs::path& data_path, const Dataset& data,
                   const std::string& file_stamp) {
  std::string out = file_stamp + "\n";
  out += "y,exposure,location_id";
  for (const auto& n : data.x_names) out += "," + n;
  for (const auto& n : data.z_names) out += "," + n;
  out += "\n";
  const ObservationSet& obs = data.obs;
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    out += format_double(obs.y[k]) + "," + format_double(obs.t[k]) + "," +
           data.site_ids[static_cast<std::size_t>(obs.loc[k])];
    for (Eigen::Index j = 0; j < obs.p(); ++j) {
      out += "," + format_double(obs.X(k, j));
    }
    for (Eigen::Index j = 0; j < obs.q(); ++j) {
      out += "," + format_double(obs.Z(k, j));
    }
    out += "\n";
  }
  atomic_write(data_path, out);
}

void write_coords(const fs::path& coords_path, const Dataset& data,
                  const std::string& file_stamp) {
  if (!data.domain.has_value()) {
    throw std::runtime_error("write_coords: dataset has no spatial domain");
  }
  std::string out = file_stamp + "\n";
  out += "site_id,x,y\n";
  for (Eigen::Index i = 0; i < data.domain->size(); ++i) {
    out += data.site_ids[static_cast<std::size_t>(i)] + "," +
           format_double(data.domain->coords(i, 0)) + "," +
           format_double(data.domain->coords(i, 1)) + "\n";
  }
  atomic_write(coords_path, out);
}

std::string RunConfig::hash() const {
  json j{{"model", model},
         {"data", data_path.string()},
         {"coords", coords_path.has_value() ? coords_path->string() : ""},
         {"seed", seed},
         {"chains", chains},
         {"hyper", hyper_to_json(hyper)}};
  return hex64(fnv1a(j.dump()));
}

void apply_config_file(RunConfig& config) {
  if (!config.config_path.has_value()) return;
  const json j = load_json_file(*config.config_path);
  if (j.contains("model")) config.model = j.at("model").get<std::string>();
  if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("chains")) config.chains = j.at("chains").get<long>();
  if (j.contains("workers")) config.workers = j.at("workers").get<long>();
  if (j.contains("data")) config.data_path = j.at("data").get<std::string>();
  if (j.contains("coords")) config.coords_path = j.at("coords").get<std::string>();
  if (j.contains("out")) config.out_dir = j.at("out").get<std::string>();
  if (j.contains("hyper")) hyper_from_json(j.at("hyper"), config.hyper);
}

Eigen::Index DrawsTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    if (column_names[i] == name) return static_cast<Eigen::Index>(i);
  }
  throw std::invalid_argument("draws table: no column named " + name);
}

Eigen::MatrixXd DrawsTable::block(const std::string& prefix) const {
  const std::string key = prefix + ".";
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    if (column_names[i].rfind(key, 0) == 0) {
      cols.push_back(static_cast<Eigen::Index>(i));
    }
  }
  Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = values.col(cols[j]);
  }
  return out;
}

DrawsTable read_draws_csv(const fs::path& path) {
  const CsvFile csv = read_csv(path);
  DrawsTable t;
  t.column_names = csv.header;
  t.values.resize(static_cast<Eigen::Index>(csv.rows.size()),
                  static_cast<Eigen::Index>(csv.header.size()));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_double(csv.rows[r][c], r, csv.header[c]);
    }
  }
  return t;
}

void write_truth_json(const fs::path& path, const SyntheticTruth& truth,
                      const std::string& stamp) {
  json j;
  j["stamp"] = stamp;
  j["beta"] = std::vector<double>(truth.beta.data(),
                                  truth.beta.data() + truth.beta.size());
  j["gamma"] = std::vector<double>(truth.gamma.data(),
                                   truth.gamma.data() + truth.gamma.size());
  j["w"] = std::vector<double>(truth.w.data(), truth.w.data() + truth.w.size());
  j["xi"] = truth.xi;
  j["sigma2"] = truth.sigma2;
  j["phi_s"] = truth.phi_s;
  j["beta_active"] = truth.beta_active;
  j["gamma_active"] = truth.gamma_active;
  j["beta_cov_id"] = std::vector<int>(
      truth.beta_cov_id.data(), truth.beta_cov_id.data() + truth.beta_cov_id.size());
  j["gamma_cov_id"] =
      std::vector<int>(truth.gamma_cov_id.data(),
                       truth.gamma_cov_id.data() + truth.gamma_cov_id.size());
  j["level_offset"] = truth.level_offset;
  j["zero_fraction"] = truth.zero_fraction;
  j["pattern"] = pattern_name(truth.pattern);
  atomic_write(path, j.dump(2) + "\n");
}

SyntheticTruth read_truth_json(const fs::path& path) {
  const json j = load_json_file(path);
  SyntheticTruth t;
  auto vec = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                             static_cast<Eigen::Index>(v.size()))
        .eval();
  };
  t.beta = vec("beta");
  t.gamma = vec("gamma");
  t.w = vec("w");
  t.xi = j.at("xi").get<double>();
  t.sigma2 = j.at("sigma2").get<double>();
  t.phi_s = j.at("phi_s").get<double>();
  t.beta_active = j.at("beta_active").get<std::vector<bool>>();
  t.gamma_active = j.at("gamma_active").get<std::vector<bool>>();
  const auto bc = j.at("beta_cov_id").get<std::vector<int>>();
  const auto gc = j.at("gamma_cov_id").get<std::vector<int>>();
  t.beta_cov_id = Eigen::Map<const Eigen::VectorXi>(
      bc.data(), static_cast<Eigen::Index>(bc.size()));
  t.gamma_cov_id = Eigen::Map<const Eigen::VectorXi>(
      gc.data(), static_cast<Eigen::Index>(gc.size()));
  t.level_offset = j.at("level_offset").get<double>();
  t.zero_fraction = j.at("zero_fraction").get<double>();
  t.pattern = parse_pattern(j.at("pattern").get<std::string>());
  return t;
}

namespace {

struct PooledChains {
  Eigen::MatrixXd draws;
  Eigen::VectorXd log_posterior;
  std::vector<std::string> columns;
};

PooledChains pool_chains(const std::vector<ChainOutput>& chains) {
  long rows = 0;
  for (const auto& c : chains) rows += c.kept;
  PooledChains pooled;
  pooled.columns = chains.front().column_names;
  pooled.draws.resize(rows, chains.front().draws.cols());
  pooled.log_posterior.resize(rows);
  long at = 0;
  for (const auto& c : chains) {
    pooled.draws.middleRows(at, c.kept) = c.draws;
    pooled.log_posterior.segment(at, c.kept) = c.log_posterior;
    at += c.kept;
  }
  return pooled;
}

std::string render_draws_csv(const std::vector<ChainOutput>& chains,
                             const std::string& stamp) {
  std::string out = stamp + "\n";
  out += "chain,iteration";
  for (const auto& name : chains.front().column_names) out += "," + name;
  out += ",log_posterior\n";
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const ChainOutput& chain = chains[c];
    for (long r = 0; r < chain.kept; ++r) {
      out += std::to_string(c + 1) + "," + std::to_string(r + 1);
      for (Eigen::Index j = 0; j < chain.draws.cols(); ++j) {
        out += "," + format_double(chain.draws(r, j));
      }
      out += "," + format_double(chain.log_posterior[r]) + "\n";
    }
  }
  return out;
}

json chain_meta_json(const ChainOutput& chain) {
  json acc = json::object();
  for (const auto& [k, v] : chain.acceptance) acc[k] = v;
  return json{{"seed", chain.seed},
              {"kept", chain.kept},
              {"acceptance", acc},
              {"final_steps",
               {{"tau_mean", chain.final_steps.tau_mean},
                {"tau_disp", chain.final_steps.tau_disp},
                {"step_xi", chain.final_steps.step_xi},
                {"step_phis", chain.final_steps.step_phis}}},
              {"clamp_events", chain.clamp_events},
              {"phis_chol_failures", chain.phis_chol_failures}};
}

std::vector<ChainOutput> run_chains(ModelId model, const ObservationSet& obs,
                                    const SpatialDomain* domain,
                                    const Hyperparameters& hyper,
                                    std::uint64_t master_seed, long n_chains) {
  std::vector<ChainOutput> chains(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));
  std::vector<std::thread> threads;
  for (long c = 0; c < n_chains; ++c) {
    threads.emplace_back([&, c]() {
      try {
        chains[static_cast<std::size_t>(c)] =
            run_chain(model, obs, domain, hyper,
                      n_chains == 1 ? master_seed
                                    : Rng::derive_seed(master_seed,
                                                       static_cast<std::uint64_t>(c)));
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return chains;
}

}  // namespace

int fit_command(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const ModelId model = parse_model(config.model);
  config.hyper.validate();
  const Dataset data = load_dataset(config.data_path, config.coords_path);
  if (has_spatial(model) && !data.domain.has_value()) {
    throw std::runtime_error("model " + config.model +
                             " requires --coords with site coordinates");
  }

  const std::string hash = config.hash();
  const std::string stamp = stamp_line(hash, config.seed);
  const SpatialDomain* domain =
      has_spatial(model) && data.domain.has_value() ? &*data.domain : nullptr;

  const std::vector<ChainOutput> chains = run_chains(
      model, data.obs, domain, config.hyper, config.seed, config.chains);
  const PooledChains pooled = pool_chains(chains);

  atomic_write(config.out_dir / "draws.csv", render_draws_csv(chains, stamp));
  atomic_write(config.out_dir / "summary.csv",
               render_summary_csv({pooled.draws, pooled.columns,
                                   pooled.log_posterior, data.x_names,
                                   data.z_names, data.site_ids,
                                   has_spatial(model)},
                                  stamp));

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  json meta{{"command", "fit"},
            {"config_hash", hash},
            {"seed", config.seed},
            {"model", config.model},
            {"n", data.obs.size()},
            {"p", data.obs.p()},
            {"q", data.obs.q()},
            {"n_sites", data.obs.n_sites},
            {"x_names", data.x_names},
            {"z_names", data.z_names},
            {"site_ids", data.site_ids},
            {"chains", config.chains},
            {"hyper", hyper_to_json(config.hyper)},
            {"elapsed_seconds", seconds}};
  meta["chain_details"] = json::array();
  for (const auto& c : chains) meta["chain_details"].push_back(chain_meta_json(c));
  atomic_write(config.out_dir / "meta.json", meta.dump(2) + "\n");
  return 0;
}

int summarize_command(const RunConfig& config) {
  const fs::path dir = config.fit_dir.value_or(config.out_dir);
  const FitMeta meta = read_meta(dir);
  const CsvFile csv = read_csv(dir / "draws.csv");
  const DrawsTable table = read_draws_csv(dir / "draws.csv");

  // strip chain/iteration/log_posterior bookkeeping columns
  std::vector<std::string> columns;
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < table.column_names.size(); ++i) {
    const std::string& n = table.column_names[i];
    if (n == "chain" || n == "iteration" || n == "log_posterior") continue;
    columns.push_back(n);
    keep.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd draws(table.values.rows(),
                        static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    draws.col(static_cast<Eigen::Index>(j)) = table.values.col(keep[j]);
  }
  const Eigen::VectorXd logpost = table.values.col(table.column("log_posterior"));

  atomic_write(config.out_dir / "summary.csv",
               render_summary_csv({draws, columns, logpost, meta.x_names,
                                   meta.z_names, meta.site_ids,
                                   has_spatial(parse_model(meta.model))},
                                  csv.stamp));
  return 0;
}

int select_command(const RunConfig& config) {
  const fs::path dir = config.fit_dir.value_or(config.out_dir);
  const FitMeta meta = read_meta(dir);
  const CsvFile csv = read_csv(dir / "draws.csv");
  const DrawsTable table = read_draws_csv(dir / "draws.csv");

  const Eigen::MatrixXd beta_draws = table.block("beta");
  const Eigen::MatrixXd gamma_draws = table.block("gamma");
  const SelectionReport rep_beta =
      fdr_select(beta_draws, config.hyper.fdr_c, config.hyper.fdr_alpha);
  const SelectionReport rep_gamma =
      fdr_select(gamma_draws, config.hyper.fdr_c, config.hyper.fdr_alpha);

  std::string out = csv.stamp + "\n";
  out += "model_block,name,p,selected\n";
  auto emit = [&](const std::string& block, const SelectionReport& rep,
                  const std::vector<std::string>& names) {
    for (Eigen::Index u = 0; u < rep.p.size(); ++u) {
      const std::string name = static_cast<std::size_t>(u) < names.size()
                                   ? names[static_cast<std::size_t>(u)]
                                   : std::to_string(u + 1);
      out += block + "," + name + "," + format_double(rep.p[u]) + "," +
             (rep.selected[static_cast<std::size_t>(u)] ? "1" : "0") + "\n";
    }
  };
  emit("beta", rep_beta, meta.x_names);
  emit("gamma", rep_gamma, meta.z_names);
  atomic_write(config.out_dir / "selection.csv", out);

  std::uint64_t fit_seed = 0;
  const std::string hash = parse_stamp(csv.stamp, &fit_seed);
  json j{{"command", "select"},
         {"config_hash", hash},
         {"seed", fit_seed},
         {"fdr_c", config.hyper.fdr_c},
         {"fdr_alpha", config.hyper.fdr_alpha},
         {"kappa_alpha_beta", rep_beta.kappa_alpha},
         {"kappa_alpha_gamma", rep_gamma.kappa_alpha},
         {"any_threshold_beta", rep_beta.any_threshold},
         {"any_threshold_gamma", rep_gamma.any_threshold}};
  atomic_write(config.out_dir / "selection_meta.json", j.dump(2) + "\n");
  return 0;
}

int predict_command(const RunConfig& config) {
  const fs::path dir = config.fit_dir.value_or(config.out_dir);
  const FitMeta meta = read_meta(dir);
  const ModelId model = parse_model(meta.model);

  // medians (and the xi median) from the stored summary
  const CsvFile summary = read_csv(dir / "summary.csv");
  const long fam_col = require_column(summary, "parameter", dir / "summary.csv");
  const long name_col = require_column(summary, "name", dir / "summary.csv");
  const long med_col = require_column(summary, "median", dir / "summary.csv");
  std::map<std::string, std::map<std::string, double>> medians;
  for (std::size_t r = 0; r < summary.rows.size(); ++r) {
    const auto& row = summary.rows[r];
    medians[row[static_cast<std::size_t>(fam_col)]]
           [row[static_cast<std::size_t>(name_col)]] =
               parse_double(row[static_cast<std::size_t>(med_col)], r, "median");
  }

  // out-sample data, mapped onto the fitted site order
  const CsvFile csv = read_csv(config.data_path);
  const long y_col = require_column(csv, "y", config.data_path);
  const long t_col = require_column(csv, "exposure", config.data_path);
  const long loc_col = require_column(csv, "location_id", config.data_path);
  std::map<std::string, int> site_index;
  for (std::size_t i = 0; i < meta.site_ids.size(); ++i) {
    site_index[meta.site_ids[i]] = static_cast<int>(i);
  }

  std::vector<long> x_cols, z_cols;
  for (const auto& name : meta.x_names) {
    x_cols.push_back(require_column(csv, name, config.data_path));
  }
  for (const auto& name : meta.z_names) {
    z_cols.push_back(require_column(csv, name, config.data_path));
  }

  const std::size_t n = csv.rows.size();
  Eigen::VectorXd y(n), t(n);
  Eigen::VectorXi loc(n);
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(x_cols.size()));
  Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(z_cols.size()));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = csv.rows[r];
    y[static_cast<Eigen::Index>(r)] =
        parse_double(row[static_cast<std::size_t>(y_col)], r, "y");
    t[static_cast<Eigen::Index>(r)] =
        parse_double(row[static_cast<std::size_t>(t_col)], r, "exposure");
    const std::string& key = row[static_cast<std::size_t>(loc_col)];
    const auto it = site_index.find(key);
    if (it == site_index.end()) {
      if (has_spatial(model)) {
        throw std::runtime_error("row " + std::to_string(r + 1) +
                                 ": location '" + key +
                                 "' was not seen during fitting");
      }
      loc[static_cast<Eigen::Index>(r)] = 0;
    } else {
      loc[static_cast<Eigen::Index>(r)] = it->second;
    }
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_double(row[static_cast<std::size_t>(x_cols[j])], r,
                       meta.x_names[j]);
    }
    for (std::size_t j = 0; j < z_cols.size(); ++j) {
      Z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_double(row[static_cast<std::size_t>(z_cols[j])], r,
                       meta.z_names[j]);
    }
  }
  const Eigen::Index n_sites =
      std::max<Eigen::Index>(1, static_cast<Eigen::Index>(meta.site_ids.size()));
  ObservationSet obs(std::move(y), std::move(t), std::move(loc), std::move(X),
                     std::move(Z), n_sites);

  ModelState point = ModelState::init(model, obs.p(), obs.q(), n_sites, meta.hyper);
  for (std::size_t j = 0; j < meta.x_names.size(); ++j) {
    point.beta[static_cast<Eigen::Index>(j)] =
        medians.at("beta").at(meta.x_names[j]);
  }
  for (std::size_t j = 0; j < meta.z_names.size(); ++j) {
    point.gamma[static_cast<Eigen::Index>(j)] =
        medians.at("gamma").at(meta.z_names[j]);
  }
  point.xi = medians.at("xi").at("xi");
  if (has_spatial(model)) {
    for (std::size_t i = 0; i < meta.site_ids.size(); ++i) {
      point.w[static_cast<Eigen::Index>(i)] =
          medians.at("w").at(meta.site_ids[i]);
    }
  }

  const Prediction pred = predict(point, obs, model, meta.hyper);
  std::string out = csv.stamp.empty()
                        ? stamp_line(meta.config_hash, meta.seed)
                        : csv.stamp;
  out += "\ny,mu_hat,phi_hat\n";
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    out += format_double(obs.y[k]) + "," + format_double(pred.mu_hat[k]) + "," +
           format_double(pred.phi_hat[k]) + "\n";
  }
  atomic_write(config.out_dir / "predictions.csv", out);
  json j{{"command", "predict"},
         {"config_hash", meta.config_hash},
         {"seed", meta.seed},
         {"n", obs.size()},
         {"sqrt_deviance", pred.sqrt_deviance}};
  atomic_write(config.out_dir / "predict_meta.json", j.dump(2) + "\n");
  std::printf("sqrt_deviance %.6f over %ld observations\n", pred.sqrt_deviance,
              static_cast<long>(obs.size()));
  return 0;
}

int simulate_command(const RunConfig& config) {
  if (!config.config_path.has_value()) {
    throw std::runtime_error("simulate requires --config with a scenario grid");
  }
  const json grid = load_json_file(*config.config_path);
  if (!grid.contains("scenarios") || !grid.at("scenarios").is_array() ||
      grid.at("scenarios").empty()) {
    throw std::runtime_error("simulate config needs a non-empty 'scenarios' array");
  }
  const long replications = grid.value("replications", 1L);
  std::vector<std::string> fit_models;
  if (grid.contains("fit_models")) {
    fit_models = grid.at("fit_models").get<std::vector<std::string>>();
  }
  Hyperparameters hyper = config.hyper;
  if (grid.contains("hyper")) hyper_from_json(grid.at("hyper"), hyper);

  std::vector<Scenario> scenarios;
  for (const auto& js : grid.at("scenarios")) {
    Scenario sc = Scenario::from_zero_setting(js.value("zero_percent", 30));
    sc.overlap_percent = js.value("overlap_percent", sc.overlap_percent);
    sc.pattern = parse_pattern(js.value("pattern", std::string("gp")));
    sc.n_obs = js.value("n_obs", sc.n_obs);
    sc.n_sites = js.value("n_sites", sc.n_sites);
    sc.n_covariates = js.value("n_covariates", sc.n_covariates);
    sc.xi_true = js.value("xi_true", sc.xi_true);
    sc.sigma2_true = js.value("sigma2_true", sc.sigma2_true);
    sc.phis_true = js.value("phis_true", sc.phis_true);
    sc.nu = js.value("nu", sc.nu);
    sc.validate();
    scenarios.push_back(sc);
  }

  struct Task {
    std::size_t scenario;
    long rep;
    std::uint64_t index;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    for (long r = 0; r < replications; ++r) {
      tasks.push_back({s, r, static_cast<std::uint64_t>(tasks.size())});
    }
  }

  const std::string hash = config.hash();
  struct MetricsRow {
    std::string text;
  };
  std::vector<std::vector<MetricsRow>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());

  const long hw = static_cast<long>(std::thread::hardware_concurrency());
  const long workers = std::max(
      1L, std::min<long>(static_cast<long>(tasks.size()),
                         config.workers > 0 ? config.workers : std::max(hw, 1L)));
  std::mutex next_mutex;
  std::size_t next_task = 0;

  auto run_task = [&](const Task& task) {
    const Scenario& sc = scenarios[task.scenario];
    Rng gen_rng(Rng::derive_seed(config.seed, task.index));
    GeneratedData data = generate_dataset(sc, gen_rng);

    const fs::path dir =
        config.out_dir / ("scn" + std::to_string(task.scenario + 1) + "_rep" +
                          std::to_string(task.rep + 1));
    const std::string stamp = stamp_line(hash, config.seed);

    Dataset ds{std::move(data.obs), std::move(data.domain), {}, {}, {}};
    for (Eigen::Index j = 0; j < ds.obs.p(); ++j) {
      const int id = data.truth.beta_cov_id[j];
      ds.x_names.push_back(id < 0 ? "x_intercept" : "x_c" + std::to_string(id + 1));
    }
    for (Eigen::Index j = 0; j < ds.obs.q(); ++j) {
      const int id = data.truth.gamma_cov_id[j];
      ds.z_names.push_back(id < 0 ? "z_intercept" : "z_c" + std::to_string(id + 1));
    }
    for (Eigen::Index i = 0; i < ds.obs.n_sites; ++i) {
      ds.site_ids.push_back(std::to_string(i + 1));
    }
    write_dataset(dir / "data.csv", ds, stamp);
    if (ds.domain.has_value()) write_coords(dir / "coords.csv", ds, stamp);
    write_truth_json(dir / "truth.json", data.truth, stamp);

    for (const std::string& model_name : fit_models) {
      const ModelId model = parse_model(model_name);
      if (has_spatial(model) && !ds.domain.has_value()) {
        throw std::runtime_error("scenario pattern 'none' cannot be fit with " +
                                 model_name);
      }
      const std::uint64_t fit_seed =
          Rng::derive_seed(config.seed, 1000003ULL + task.index);
      const ChainOutput chain =
          run_chain(model, ds.obs,
                    has_spatial(model) ? &*ds.domain : nullptr, hyper, fit_seed);

      std::optional<SelectionReport> rep_beta, rep_gamma;
      if (has_selection(model)) {
        rep_beta = fdr_select(chain.block("beta"), hyper.fdr_c, hyper.fdr_alpha);
        rep_gamma = fdr_select(chain.block("gamma"), hyper.fdr_c, hyper.fdr_alpha);
      }
      const FitMetrics m =
          evaluate_fit(data.truth, chain, rep_beta ? &*rep_beta : nullptr,
                       rep_gamma ? &*rep_gamma : nullptr);

      std::string row = std::to_string(task.scenario + 1) + "," +
                        std::to_string(task.rep + 1) + "," + model_name + "," +
                        pattern_name(sc.pattern) + "," +
                        std::to_string(sc.zero_percent) + "," +
                        std::to_string(sc.overlap_percent);
      for (double v : {m.zero_fraction, m.mse_beta, m.mse_gamma, m.mse_w,
                       m.mse_xi, m.mse_sigma2, m.mse_phis, m.cp_beta,
                       m.cp_gamma, m.cp_w, m.fpr, m.tpr, m.overlap}) {
        row += "," + format_double(v);
      }
      results[task.index].push_back({row});
    }
  };

  std::vector<std::thread> pool;
  for (long wk = 0; wk < workers; ++wk) {
    pool.emplace_back([&]() {
      while (true) {
        std::size_t mine;
        {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (next_task >= tasks.size()) return;
          mine = next_task++;
        }
        try {
          run_task(tasks[mine]);
        } catch (...) {
          errors[mine] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  if (!fit_models.empty()) {
    std::string out = stamp_line(hash, config.seed) + "\n";
    out += "scenario,replication,model,pattern,zero_target,overlap_target,"
           "zero_realized,mse_beta,mse_gamma,mse_w,mse_xi,mse_sigma2,mse_phis,"
           "cp_beta,cp_gamma,cp_w,fpr,tpr,overlap\n";
    for (const auto& rows : results) {
      for (const auto& r : rows) out += r.text + "\n";
    }
    atomic_write(config.out_dir / "metrics.csv", out);
  }
  return 0;
}

}  // namespace tdglm
