#include "drate/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "drate/error.hpp"

namespace drate {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

Json dgp_to_json(const DgpSpec& spec) {
  const auto& o = spec.options;
  Json j = {{"kind", to_string(spec.kind)},
            {"p", spec.p},
            {"noise_sd", o.noise_sd},
            {"noise", to_string(o.noise)}};
  if (spec.kind == DgpKind::Example1) {
    j["propensity_form"] = to_string(o.propensity_form);
    j["covariate_mixing_weight"] = o.covariate_mixing_weight;
    j["rho"] = o.rho;
    j["alpha"] = o.alpha;
    j["model_mix_prob"] = o.model_mix_prob;
  } else {
    j["add_treatment_shift"] = o.add_treatment_shift;
  }
  return j;
}

DgpSpec dgp_from_json(const Json& j) {
  constexpr std::string_view ctx = "dgp";
  check_keys(j,
             {"kind", "p", "noise_sd", "noise", "propensity_form", "covariate_mixing_weight", "rho",
              "alpha", "model_mix_prob", "add_treatment_shift"},
             ctx);
  const auto kind = parse_dgp_kind(get_field<std::string>(j, "kind", ctx));
  const int p = get_field<int>(j, "p", ctx);
  DgpOptions o;
  o.noise_sd = get_field_or(j, "noise_sd", o.noise_sd, ctx);
  o.noise = parse_noise_coupling(get_field_or<std::string>(j, "noise", to_string(o.noise), ctx));
  o.propensity_form = parse_propensity_form(
      get_field_or<std::string>(j, "propensity_form", to_string(o.propensity_form), ctx));
  o.covariate_mixing_weight =
      get_field_or(j, "covariate_mixing_weight", o.covariate_mixing_weight, ctx);
  o.rho = get_field_or(j, "rho", o.rho, ctx);
  o.alpha = get_field_or(j, "alpha", o.alpha, ctx);
  o.model_mix_prob = get_field_or(j, "model_mix_prob", o.model_mix_prob, ctx);
  o.add_treatment_shift = get_field_or(j, "add_treatment_shift", o.add_treatment_shift, ctx);
  if (kind == DgpKind::Example2 && p < 4)
    throw InvalidParameter("dgp.p: Example2 requires p >= 4, got " + std::to_string(p));
  if (p < 1) throw InvalidParameter("dgp.p: must be >= 1, got " + std::to_string(p));
  return make_dgp(kind, p, o);
}

std::string dataset_to_csv(const Dataset& ds) {
  const bool potential = ds.y0.has_value();
  std::string out;
  for (Eigen::Index j = 0; j < ds.p(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += potential ? "d,y,y0,y1\n" : "d,y\n";
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.p(); ++j) {
      out += format_double(ds.x(i, j));
      out += ',';
    }
    out += ds.d(i) ? "1," : "0,";
    out += format_double(ds.y(i));
    if (potential) {
      out += ',';
      out += format_double((*ds.y0)(i));
      out += ',';
      out += format_double((*ds.y1)(i));
    }
    out += '\n';
  }
  return out;
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  write_file(path, dataset_to_csv(ds));
}

Dataset dataset_from_csv(const std::string& text) {
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      auto nl = rest.find('\n');
      auto line = rest.substr(0, nl);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw DataError("dataset CSV is empty", 1);

  const auto header = split_fields(lines[0]);
  std::size_t p = 0;
  while (p < header.size() && header[p] == "x" + std::to_string(p + 1)) ++p;
  const std::size_t rest_cols = header.size() - p;
  const bool potential = rest_cols == 4;
  if (p == 0 || !(rest_cols == 2 || rest_cols == 4) || header[p] != "d" || header[p + 1] != "y" ||
      (potential && (header[p + 2] != "y0" || header[p + 3] != "y1")))
    throw DataError("header must read x1,...,xp,d,y[,y0,y1]", 1);

  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  Dataset ds;
  ds.x.resize(n, static_cast<Eigen::Index>(p));
  ds.d.resize(n);
  ds.y.resize(n);
  Eigen::VectorXd y0(potential ? n : 0), y1(potential ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t line_no = static_cast<std::size_t>(i) + 2;
    const auto fields = split_fields(lines[static_cast<std::size_t>(i) + 1]);
    if (fields.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                          std::to_string(fields.size()),
                      line_no);
    auto num = [&](std::size_t col) {
      double v;
      if (!parse_double(fields[col], v) || !std::isfinite(v))
        throw DataError("field " + std::to_string(col + 1) + " is not a finite number: '" +
                            std::string(fields[col]) + "'",
                        line_no);
      return v;
    };
    for (std::size_t j = 0; j < p; ++j) ds.x(i, static_cast<Eigen::Index>(j)) = num(j);
    const auto& dfield = fields[p];
    if (dfield != "0" && dfield != "1") throw DataError("treatment must be 0 or 1", line_no);
    ds.d(i) = dfield == "1";
    ds.y(i) = num(p + 1);
    if (potential) {
      y0(i) = num(p + 2);
      y1(i) = num(p + 3);
      if ((ds.d(i) ? y1(i) : y0(i)) != ds.y(i))
        throw DataError("observed outcome disagrees with potential outcomes", line_no);
    }
  }
  if (potential) {
    ds.y0 = std::move(y0);
    ds.y1 = std::move(y1);
  }
  return ds;
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  return dataset_from_csv(read_file(path));
}

Json meta_to_json(const DatasetMeta& meta) {
  return {{"kind", to_string(meta.dgp.kind)},
          {"p", meta.dgp.p},
          {"n", meta.n},
          {"seed", meta.seed},
          {"noise_sd", meta.dgp.options.noise_sd},
          {"propensity_form", to_string(meta.dgp.options.propensity_form)},
          {"dgp", dgp_to_json(meta.dgp)}};
}

DatasetMeta meta_from_json(const Json& j) {
  constexpr std::string_view ctx = "meta";
  check_keys(j, {"kind", "p", "n", "seed", "noise_sd", "propensity_form", "dgp"}, ctx);
  DatasetMeta meta;
  if (j.contains("dgp")) {
    meta.dgp = dgp_from_json(j.at("dgp"));
  } else {
    DgpOptions o;
    o.noise_sd = get_field_or(j, "noise_sd", o.noise_sd, ctx);
    o.propensity_form = parse_propensity_form(
        get_field_or<std::string>(j, "propensity_form", "index_mix", ctx));
    meta.dgp = make_dgp(parse_dgp_kind(get_field<std::string>(j, "kind", ctx)),
                        get_field<int>(j, "p", ctx), o);
  }
  meta.n = get_field<Eigen::Index>(j, "n", ctx);
  meta.seed = get_field<std::uint64_t>(j, "seed", ctx);
  return meta;
}

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
  auto out = csv_path;
  out.replace_extension(".meta.json");
  return out;
}

void write_meta(const DatasetMeta& meta, const std::filesystem::path& path) {
  write_file(path, meta_to_json(meta).dump(2) + "\n");
}

std::optional<DatasetMeta> read_meta_if_present(const std::filesystem::path& csv_path) {
  const auto path = meta_path_for(csv_path);
  if (!std::filesystem::exists(path)) return std::nullopt;
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("metadata '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return meta_from_json(j);
}

}  // namespace drate
