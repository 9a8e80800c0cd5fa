#include "atm/factor_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "atm/error.hpp"

namespace atm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

int parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    fail(Errc::parse, what + ": expected an integer, got '" + s + "'");
  }
  if (used != s.size()) fail(Errc::parse, what + ": expected an integer, got '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail(Errc::parse, what + ": expected a number, got '" + s + "'");
  }
  if (used != s.size()) fail(Errc::parse, what + ": expected a number, got '" + s + "'");
  return v;
}

}  // namespace

bool operator==(const FactorSpec& a, const FactorSpec& b) {
  return a.num_levels == b.num_levels && a.kind == b.kind && a.physical_values == b.physical_values &&
         a.units == b.units;
}

bool operator==(const FactorSpace& a, const FactorSpace& b) { return a.factors_ == b.factors_; }

FactorSpace::FactorSpace(std::vector<FactorSpec> factors) : factors_(std::move(factors)) {
  require(!factors_.empty(), Errc::invalid_argument, "factor space needs at least one factor");
  for (std::size_t l = 0; l < factors_.size(); ++l) {
    const auto& f = factors_[l];
    require(f.num_levels >= 2, Errc::invalid_argument,
            "factor " + std::to_string(l + 1) + " needs at least 2 levels");
    require(f.physical_values.empty() || f.physical_values.size() == static_cast<std::size_t>(f.num_levels),
            Errc::invalid_argument,
            "factor " + std::to_string(l + 1) + ": physical_values length must equal num_levels");
  }
}

FactorSpace FactorSpace::uniform(std::size_t p, int levels, FactorKind kind) {
  std::vector<FactorSpec> f(p, FactorSpec{levels, kind, {}, {}});
  return FactorSpace(std::move(f));
}

FactorSpace FactorSpace::from_profile(std::span<const int> levels, FactorKind kind) {
  std::vector<FactorSpec> f;
  for (int n : levels) f.push_back(FactorSpec{n, kind, {}, {}});
  return FactorSpace(std::move(f));
}

std::vector<int> FactorSpace::level_profile() const {
  std::vector<int> out;
  for (const auto& f : factors_) out.push_back(f.num_levels);
  return out;
}

std::vector<FactorKind> FactorSpace::kinds() const {
  std::vector<FactorKind> out;
  for (const auto& f : factors_) out.push_back(f.kind);
  return out;
}

std::optional<std::uint64_t> FactorSpace::cardinality() const {
  std::uint64_t c = 1;
  for (const auto& f : factors_) {
    const auto n = static_cast<std::uint64_t>(f.num_levels);
    if (c > UINT64_MAX / n) return std::nullopt;
    c *= n;
  }
  return c;
}

bool FactorSpace::contains(std::span<const int> setting) const {
  if (setting.size() != factors_.size()) return false;
  for (std::size_t l = 0; l < setting.size(); ++l)
    if (setting[l] < 1 || setting[l] > factors_[l].num_levels) return false;
  return true;
}

void FactorSpace::check_setting(std::span<const int> setting) const {
  require(setting.size() == factors_.size(), Errc::dimension_mismatch,
          "setting has " + std::to_string(setting.size()) + " factors, space has " +
              std::to_string(factors_.size()));
  for (std::size_t l = 0; l < setting.size(); ++l)
    require(setting[l] >= 1 && setting[l] <= factors_[l].num_levels, Errc::invalid_argument,
            "level " + std::to_string(setting[l]) + " out of range for factor " + std::to_string(l + 1));
}

void for_each_setting(const FactorSpace& space, const std::function<void(const Setting&)>& visit,
                      std::uint64_t cap) {
  const auto card = space.cardinality();
  if (!card || *card > cap)
    fail(Errc::capacity, "factor space too large to enumerate (cap " + std::to_string(cap) + ")");
  const std::size_t p = space.size();
  Setting x(p, 1);
  for (std::uint64_t k = 0; k < *card; ++k) {
    visit(x);
    for (std::size_t l = p; l-- > 0;) {
      if (x[l] < space.levels(l)) {
        ++x[l];
        break;
      }
      x[l] = 1;
    }
  }
}

std::vector<Setting> enumerate(const FactorSpace& space, std::uint64_t cap) {
  std::vector<Setting> out;
  for_each_setting(space, [&](const Setting& x) { out.push_back(x); }, cap);
  return out;
}

std::uint64_t setting_rank(std::span<const int> profile, std::span<const int> setting) {
  std::uint64_t r = 0;
  for (std::size_t l = 0; l < profile.size(); ++l)
    r = r * static_cast<std::uint64_t>(profile[l]) + static_cast<std::uint64_t>(setting[l] - 1);
  return r;
}

const char* provenance_name(Provenance p) noexcept {
  switch (p) {
    case Provenance::catalog_oa: return "catalog-OA";
    case Provenance::permuted_oa: return "permuted-OA";
    case Provenance::balanced_random: return "balanced-random";
    case Provenance::external: return "external";
  }
  return "external";
}

Provenance parse_provenance(const std::string& name) {
  for (auto p : {Provenance::catalog_oa, Provenance::permuted_oa, Provenance::balanced_random,
                 Provenance::external})
    if (name == provenance_name(p)) return p;
  fail(Errc::parse, "unknown provenance '" + name + "'");
}

Design::Design(std::size_t factors, std::vector<int> runs, Provenance provenance)
    : factors_(factors), cells_(std::move(runs)), provenance_(provenance) {
  require(factors_ > 0, Errc::invalid_argument, "design needs at least one factor");
  require(cells_.size() % factors_ == 0, Errc::dimension_mismatch, "run matrix is not rectangular");
  for (int v : cells_) require(v >= 1, Errc::invalid_argument, "level indices are 1-based");
}

Design Design::from_rows(const std::vector<Setting>& rows, Provenance provenance) {
  require(!rows.empty(), Errc::invalid_argument, "design needs at least one run");
  const std::size_t p = rows.front().size();
  std::vector<int> cells;
  cells.reserve(rows.size() * p);
  for (const auto& r : rows) {
    require(r.size() == p, Errc::dimension_mismatch, "ragged design rows");
    cells.insert(cells.end(), r.begin(), r.end());
  }
  return Design(p, std::move(cells), provenance);
}

Setting Design::setting(std::size_t i) const {
  auto r = run(i);
  return Setting(r.begin(), r.end());
}

std::vector<int> Design::column(std::size_t factor) const {
  std::vector<int> c(runs());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = at(i, factor);
  return c;
}

Design Design::with_provenance(Provenance p) const {
  Design d = *this;
  d.provenance_ = p;
  return d;
}

std::vector<int> Design::observed_levels() const {
  std::vector<int> m(factors_, 0);
  for (std::size_t i = 0; i < runs(); ++i)
    for (std::size_t l = 0; l < factors_; ++l) m[l] = std::max(m[l], at(i, l));
  return m;
}

void Design::validate(const FactorSpace& space) const {
  require(runs() >= 1, Errc::invalid_argument, "design has no runs");
  require(factors_ == space.size(), Errc::dimension_mismatch, "design/space factor count mismatch");
  for (std::size_t i = 0; i < runs(); ++i) {
    if (!space.contains(run(i)))
      fail(Errc::invalid_argument, "run " + std::to_string(i + 1) + " is not a valid setting");
  }
}

Design stack(const Design& top, const Design& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  require(top.factors() == bottom.factors(), Errc::dimension_mismatch, "cannot stack designs of different width");
  std::vector<int> cells = top.cells();
  cells.insert(cells.end(), bottom.cells().begin(), bottom.cells().end());
  const auto prov = top.provenance() == bottom.provenance() ? top.provenance() : Provenance::external;
  return Design(top.factors(), std::move(cells), prov);
}

ObservationSet::ObservationSet(Design design, std::vector<double> responses, std::optional<double> noise_sd)
    : design_(std::move(design)), responses_(std::move(responses)), noise_sd_(noise_sd) {
  require(design_.runs() == responses_.size(), Errc::dimension_mismatch,
          "responses (" + std::to_string(responses_.size()) + ") not aligned with runs (" +
              std::to_string(design_.runs()) + ")");
  for (double y : responses_) require(std::isfinite(y), Errc::invalid_argument, "responses must be finite");
  require(!noise_sd_ || *noise_sd_ >= 0.0, Errc::invalid_argument, "noise_sd must be nonnegative");
}

ObservationSet ObservationSet::append(const ObservationSet& more) const {
  if (empty()) return more;
  if (more.empty()) return *this;
  std::vector<double> y = responses_;
  y.insert(y.end(), more.responses_.begin(), more.responses_.end());
  return ObservationSet(stack(design_, more.design_), std::move(y), noise_sd_);
}

ObservationSet ObservationSet::subset(std::span<const std::size_t> rows) const {
  if (rows.empty()) return {};
  std::vector<int> cells;
  std::vector<double> y;
  for (auto i : rows) {
    auto r = design_.run(i);
    cells.insert(cells.end(), r.begin(), r.end());
    y.push_back(responses_[i]);
  }
  return ObservationSet(Design(design_.factors(), std::move(cells), design_.provenance()), std::move(y), noise_sd_);
}

std::optional<std::vector<double>> project_marginal(const ObservationSet& obs, std::size_t factor, int level) {
  require(factor < obs.factors(), Errc::invalid_argument, "factor index out of range");
  require(level >= 1, Errc::invalid_argument, "level indices are 1-based");
  std::vector<double> out;
  const auto& d = obs.design();
  for (std::size_t i = 0; i < d.runs(); ++i)
    if (d.at(i, factor) == level) out.push_back(obs.responses()[i]);
  if (out.empty()) return std::nullopt;
  return out;
}

LevelTable read_level_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    header = split(line, ',');
    break;
  }
  require(!header.empty(), Errc::parse, "csv: missing header row");
  std::size_t p = 0;
  bool has_y = false;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h == "y" && c + 1 == header.size()) {
      has_y = true;
    } else {
      require(h == "f" + std::to_string(c + 1), Errc::parse,
              "csv header: column " + std::to_string(c + 1) + " must be 'f" + std::to_string(c + 1) + "', got '" +
                  h + "'");
      ++p;
    }
  }
  require(p > 0, Errc::parse, "csv header: no factor columns");
  std::vector<int> cells;
  std::vector<double> y;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    ++row;
    auto cols = split(line, ',');
    require(cols.size() == header.size(), Errc::parse,
            "csv row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields");
    for (std::size_t c = 0; c < p; ++c) {
      int v = parse_int(cols[c], "csv row " + std::to_string(row) + " field f" + std::to_string(c + 1));
      require(v >= 1, Errc::parse, "csv row " + std::to_string(row) + " field f" + std::to_string(c + 1) +
                                       ": levels are 1-based");
      cells.push_back(v);
    }
    if (has_y) {
      double v = parse_double(cols[p], "csv row " + std::to_string(row) + " field y");
      require(std::isfinite(v), Errc::parse, "csv row " + std::to_string(row) + " field y: not finite");
      y.push_back(v);
    }
  }
  require(row > 0, Errc::parse, "csv: no data rows");
  LevelTable t{Design(p, std::move(cells), Provenance::external), std::nullopt};
  if (has_y) t.responses = std::move(y);
  return t;
}

LevelTable read_level_csv_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io, "cannot open '" + path + "'");
  return read_level_csv(in);
}

namespace {
void write_header(std::ostream& out, std::size_t p, bool with_y) {
  for (std::size_t l = 0; l < p; ++l) out << (l ? "," : "") << 'f' << (l + 1);
  if (with_y) out << ",y";
  out << '\n';
}
}  // namespace

void write_design_csv(std::ostream& out, const Design& design) {
  write_header(out, design.factors(), false);
  for (std::size_t i = 0; i < design.runs(); ++i) {
    for (std::size_t l = 0; l < design.factors(); ++l) out << (l ? "," : "") << design.at(i, l);
    out << '\n';
  }
}

void write_observations_csv(std::ostream& out, const ObservationSet& obs) {
  const auto& d = obs.design();
  write_header(out, d.factors(), true);
  std::ostringstream num;
  for (std::size_t i = 0; i < d.runs(); ++i) {
    for (std::size_t l = 0; l < d.factors(); ++l) out << d.at(i, l) << ',';
    num.str({});
    num.precision(17);
    num << obs.responses()[i];
    out << num.str() << '\n';
  }
}

void to_json(nlohmann::json& j, const FactorSpace& space) {
  j = nlohmann::json::array();
  for (const auto& f : space.factors()) {
    nlohmann::json e{{"levels", f.num_levels}, {"kind", f.kind == FactorKind::ordinal ? "ordinal" : "nominal"}};
    if (!f.physical_values.empty()) e["physical_values"] = f.physical_values;
    if (!f.units.empty()) e["units"] = f.units;
    j.push_back(std::move(e));
  }
}

void from_json(const nlohmann::json& j, FactorSpace& space) {
  require(j.is_array(), Errc::parse, "space: expected an array of factors");
  std::vector<FactorSpec> f;
  for (const auto& e : j) {
    FactorSpec s;
    s.num_levels = e.at("levels").get<int>();
    const auto kind = e.value("kind", std::string("ordinal"));
    require(kind == "ordinal" || kind == "nominal", Errc::parse, "space: unknown factor kind '" + kind + "'");
    s.kind = kind == "ordinal" ? FactorKind::ordinal : FactorKind::nominal;
    if (e.contains("physical_values")) s.physical_values = e["physical_values"].get<std::vector<double>>();
    s.units = e.value("units", std::string());
    f.push_back(std::move(s));
  }
  space = FactorSpace(std::move(f));
}

void to_json(nlohmann::json& j, const Design& design) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < design.runs(); ++i) rows.push_back(design.setting(i));
  j = {{"factors", design.factors()}, {"provenance", provenance_name(design.provenance())}, {"runs", rows}};
}

void from_json(const nlohmann::json& j, Design& design) {
  const auto p = j.at("factors").get<std::size_t>();
  std::vector<int> cells;
  for (const auto& r : j.at("runs")) {
    auto s = r.get<std::vector<int>>();
    require(s.size() == p, Errc::parse, "design: ragged run");
    cells.insert(cells.end(), s.begin(), s.end());
  }
  design = Design(p, std::move(cells), parse_provenance(j.value("provenance", std::string("external"))));
}

void to_json(nlohmann::json& j, const ObservationSet& obs) {
  j = nlohmann::json::object();
  if (obs.empty()) {
    j["design"] = nullptr;
    j["responses"] = nlohmann::json::array();
  } else {
    j["design"] = obs.design();
    j["responses"] = obs.responses();
  }
  if (obs.noise_sd()) j["noise_sd"] = *obs.noise_sd();
}

void from_json(const nlohmann::json& j, ObservationSet& obs) {
  if (j.at("design").is_null()) {
    obs = ObservationSet();
    return;
  }
  std::optional<double> sd;
  if (j.contains("noise_sd")) sd = j["noise_sd"].get<double>();
  obs = ObservationSet(j.at("design").get<Design>(), j.at("responses").get<std::vector<double>>(), sd);
}

std::vector<int> parse_profile(const std::string& text) {
  std::vector<int> out;
  std::string token;
  auto flush = [&]() {
    token = trim(token);
    if (token.empty()) return;
    const auto caret = token.find('^');
    const int levels = parse_int(token.substr(0, caret), "profile");
    const int count = caret == std::string::npos ? 1 : parse_int(token.substr(caret + 1), "profile");
    require(levels >= 1 && count >= 1, Errc::parse, "profile: bad term '" + token + "'");
    out.insert(out.end(), static_cast<std::size_t>(count), levels);
    token.clear();
  };
  for (char c : text) {
    if (c == ',' || c == ' ' || c == 'x' || c == '*' || c == '.') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  require(!out.empty(), Errc::parse, "empty level profile");
  return out;
}

std::string format_profile(std::span<const int> profile) {
  std::string out;
  std::size_t i = 0;
  while (i < profile.size()) {
    std::size_t j = i;
    while (j < profile.size() && profile[j] == profile[i]) ++j;
    if (!out.empty()) out += ' ';
    out += std::to_string(profile[i]) + '^' + std::to_string(j - i);
    i = j;
  }
  return out;
}

std::string format_setting(std::span<const int> setting, char sep) {
  std::string out;
  for (std::size_t l = 0; l < setting.size(); ++l) {
    if (l) out += sep;
    out += std::to_string(setting[l]);
  }
  return out;
}

}  // namespace atm
