#include "ncvx/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

#include "ncvx/errors.hpp"

namespace ncvx {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

using json = nlohmann::json;

// Minimal writer: nlohmann prints the shortest round-trip form, the dump
// format asks for a fixed 17 digits.
class Writer {
 public:
  std::string str() const { return os_.str(); }
  Writer& raw(const std::string& s) {
    os_ << s;
    return *this;
  }
  Writer& num(double x) { return raw(format_double(x)); }
  Writer& vec(const Vec2d& v) { return raw("[").num(v(0)).raw(", ").num(v(1)).raw("]"); }
  Writer& list(const std::vector<Vec2d>& pts) {
    raw("[");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) raw(", ");
      vec(pts[i]);
    }
    return raw("]");
  }
  Writer& numbers(const std::vector<double>& xs) {
    raw("[");
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) raw(", ");
      num(xs[i]);
    }
    return raw("]");
  }
  Writer& key(const char* k) { return raw("\"").raw(k).raw("\": "); }

 private:
  std::ostringstream os_;
};

// Gradients go out as (a1, a2, a3) plus the trace; the four entries follow
// because coordinates do not reproduce the matrix bit for bit.
void write_gradient(Writer& w, const Mat2d& g) {
  const auto t = TracelessMat2<double>::from_matrix(g);
  w.key("gradient").numbers({t.a1, t.a2, t.a3}).raw(", ");
  w.key("trace").num(g.trace()).raw(", ");
  w.key("matrix").numbers({g(0, 0), g(0, 1), g(1, 0), g(1, 1)});
}

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::ConfigError, "field dump: " + what); }

Vec2d read_vec(const json& j) {
  if (!j.is_array() || j.size() != 2) bad("expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Vec2d> read_list(const json& j) {
  if (!j.is_array()) bad("expected a point list");
  std::vector<Vec2d> out;
  for (const auto& p : j) out.push_back(read_vec(p));
  return out;
}

Mat2d read_gradient(const json& j) {
  Mat2d g;
  if (j.contains("matrix")) {
    const auto& m = j.at("matrix");
    if (!m.is_array() || m.size() != 4) bad("matrix needs 4 entries");
    g << m[0].get<double>(), m[1].get<double>(), m[2].get<double>(), m[3].get<double>();
    return g;
  }
  const auto& c = j.at("gradient");
  if (!c.is_array() || c.size() != 3) bad("gradient needs (a1, a2, a3)");
  g = TracelessMat2<double>{c[0].get<double>(), c[1].get<double>(), c[2].get<double>()}.matrix();
  return g + 0.5 * j.value("trace", 0.0) * Mat2d::Identity();
}

const char* shape_name(CellShape s) {
  switch (s) {
    case CellShape::Triangle: return "triangle";
    case CellShape::Polygon: return "polygon";
    case CellShape::Disk: return "disk";
  }
  return "polygon";
}

CellShape shape_from(const std::string& s) {
  if (s == "triangle") return CellShape::Triangle;
  if (s == "polygon") return CellShape::Polygon;
  if (s == "disk") return CellShape::Disk;
  bad("unknown cell shape '" + s + "'");
}

}  // namespace

std::string dump_field(const PiecewiseField& f) {
  Writer w;
  w.raw("{\n  ").key("schema").raw("\"").raw(kFieldSchema).raw("\",\n  ");
  const Domain2& d = f.domain();
  w.key("domain").raw("{");
  if (d.is_disk()) {
    w.key("kind").raw("\"disk\", ").key("center").vec(d.round()->center).raw(", ");
    w.key("radius").num(d.round()->radius).raw(", ").key("facets").raw(std::to_string(d.boundary().size()));
  } else {
    w.key("kind").raw("\"polygon\", ").key("boundary").list(d.boundary());
  }
  w.raw("},\n  ").key("datum").raw("{");
  write_gradient(w, f.datum().gradient);
  w.raw(", ").key("translation").vec(f.datum().translation).raw("},\n  ");
  w.key("residual").num(f.residual()).raw(",\n  ");
  w.key("cells").raw("[");
  bool first = true;
  for (const auto& c : f.cells()) {
    w.raw(first ? "\n    {" : ",\n    {");
    first = false;
    w.key("id").raw(std::to_string(c.id)).raw(", ").key("parent").raw(std::to_string(c.parent)).raw(", ");
    w.key("shape").raw("\"").raw(shape_name(c.shape)).raw("\", ");
    w.key("generation").raw(std::to_string(c.generation)).raw(", ").key("label").raw(std::to_string(c.label)).raw(", ");
    w.key("refined").raw(c.refined ? "true" : "false").raw(", ");
    w.key("vertices").list(c.vertices).raw(", ").key("displacement").list(c.displacement).raw(", ");
    write_gradient(w, c.gradient);
    w.raw(", ").key("translation").vec(c.translation);
    if (c.disk) {
      w.raw(", ").key("disk").raw("{").key("center").vec(c.disk->center).raw(", ").key("radius").num(c.disk->radius);
      w.raw(", ").key("sign").raw(std::to_string(c.disk->sign)).raw("}");
    }
    w.raw("}");
  }
  w.raw(first ? "]\n}\n" : "\n  ]\n}\n");
  return w.str();
}

PiecewiseField load_field(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(std::string("not valid JSON: ") + e.what());
  }
  try {
    if (j.value("schema", std::string()) != kFieldSchema)
      bad("schema tag must be " + std::string(kFieldSchema) + ", got '" + j.value("schema", std::string()) + "'");
    const auto& dj = j.at("domain");
    const std::string kind = dj.at("kind").get<std::string>();
    if (kind != "disk" && kind != "polygon") bad("unknown domain kind '" + kind + "'");
    Domain2 dom = kind == "disk"
                      ? Domain2::disk(read_vec(dj.at("center")), dj.at("radius").get<double>(), dj.value("facets", 720))
                      : Domain2::polygon(read_list(dj.at("boundary")));
    Datum datum;
    datum.gradient = read_gradient(j.at("datum"));
    datum.translation = read_vec(j.at("datum").at("translation"));
    std::vector<Cell> cells;
    for (const auto& cj : j.at("cells")) {
      Cell c;
      c.id = cj.at("id").get<std::int64_t>();
      c.parent = cj.value("parent", std::int64_t{-1});
      c.shape = shape_from(cj.at("shape").get<std::string>());
      c.generation = cj.value("generation", 0);
      c.label = cj.value("label", 0);
      c.refined = cj.value("refined", false);
      c.vertices = read_list(cj.at("vertices"));
      c.displacement = read_list(cj.at("displacement"));
      c.gradient = read_gradient(cj);
      c.translation = read_vec(cj.at("translation"));
      if (cj.contains("disk")) {
        const auto& k = cj.at("disk");
        c.disk = DiskPayload{read_vec(k.at("center")), k.at("radius").get<double>(), k.value("sign", 1)};
      }
      if (c.shape == CellShape::Disk && !c.disk) bad("disk cell " + std::to_string(c.id) + " lacks its payload");
      cells.push_back(std::move(c));
    }
    return PiecewiseField(std::move(dom), datum, std::move(cells));
  } catch (const json::exception& e) {
    bad(e.what());
  }
}

std::string metrics_table(const std::vector<StageMetrics>& rows) {
  std::ostringstream os;
  os << "# schema " << kMetricsSchema << "\n";
  os << "stage\tround\tbad_fraction\tp50\tp95\tmax\tsup_dev\tcells\tenergy_p95\tresidual\tsampled\n";
  for (const auto& m : rows)
    os << m.stage << '\t' << m.round << '\t' << format_double(m.bad_fraction) << '\t' << format_double(m.p50) << '\t'
       << format_double(m.p95) << '\t' << format_double(m.max) << '\t' << format_double(m.sup_dev) << '\t' << m.cells
       << '\t' << format_double(m.energy_p95) << '\t' << format_double(m.residual) << '\t' << (m.sampled ? 1 : 0)
       << '\n';
  return os.str();
}

std::vector<StageMetrics> parse_metrics(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<StageMetrics> out;
  bool schema = false, header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      schema = schema || line == std::string("# schema ") + kMetricsSchema;
      continue;
    }
    if (!header) {
      if (line.rfind("stage\t", 0) != 0) throw Error(Errc::ConfigError, "metrics: missing column header");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    StageMetrics m;
    int sampled = 0;
    if (!(ls >> m.stage >> m.round >> m.bad_fraction >> m.p50 >> m.p95 >> m.max >> m.sup_dev >> m.cells))
      throw Error(Errc::ConfigError, "metrics: malformed row '" + line + "'");
    ls >> m.energy_p95 >> m.residual >> sampled;
    m.sampled = sampled != 0;
    out.push_back(m);
  }
  if (!schema) throw Error(Errc::ConfigError, std::string("metrics: schema tag ") + kMetricsSchema + " missing");
  return out;
}

namespace {

void write_node(Writer& w, const LaminateNode& n, int indent) {
  const std::string pad(indent, ' ');
  w.raw("{").key("level").raw(std::to_string(n.level)).raw(", ").key("weight").num(n.weight).raw(", ");
  w.key("lambda").num(n.lambda).raw(", ");
  std::vector<double> coords;
  if (n.matrix.rows() == 2) {
    const auto t = TracelessMat2<double>::from_matrix(Mat2d(n.matrix));
    coords = {t.a1, t.a2, t.a3};
  } else {
    const auto t = TracelessMat3<double>::from_matrix(Mat3d(n.matrix));
    for (int i = 0; i < 5; ++i) coords.push_back(t.s(i));
    for (int i = 0; i < 3; ++i) coords.push_back(t.k(i));
  }
  w.key("coords").numbers(coords);
  if (!n.children.empty()) {
    w.raw(", ").key("children").raw("[");
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      w.raw(i ? ",\n" : "\n").raw(pad + "  ");
      write_node(w, n.children[i], indent + 2);
    }
    w.raw("]");
  }
  w.raw("}");
}

}  // namespace

std::string dump_laminate(const LaminateNode& root) {
  Writer w;
  w.raw("{").key("schema").raw("\"").raw(kLaminateSchema).raw("\", ").key("root").raw("\n  ");
  write_node(w, root, 2);
  w.raw("}\n");
  return w.str();
}

}  // namespace ncvx
