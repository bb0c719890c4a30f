#include "fabric/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fabric {

using nlohmann::json;

LogLevel log_level() {
  const char* env = std::getenv("FABRIC_LOG");
  if (env == nullptr) return LogLevel::Warn;
  const std::string v(env);
  if (v == "quiet" || v == "0") return LogLevel::Quiet;
  if (v == "error") return LogLevel::Error;
  if (v == "info") return LogLevel::Info;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

void log(LogLevel level, const std::string& message) {
  static const LogLevel threshold = log_level();
  if (level == LogLevel::Quiet || level > threshold) return;
  static constexpr std::array<const char*, 5> names{"", "error", "warn", "info", "debug"};
  std::cerr << "[fabric " << names[static_cast<size_t>(level)] << "] " << message << '\n';
}

namespace {

/// Collects schema violations as (JSON pointer, message).
struct Problems {
  std::vector<std::pair<std::string, std::string>> items;
  void add(const std::string& ptr, const std::string& msg) { items.emplace_back(ptr, msg); }
  bool empty() const { return items.empty(); }
};

bool as_number(const json& j, double& out) {
  if (!j.is_number()) return false;
  out = j.get<double>();
  return std::isfinite(out);
}

bool as_id(const json& j, VertexId& out) {
  if (!j.is_number_integer()) return false;
  out = j.get<VertexId>();
  return true;
}

std::optional<MatrixXd> parse_matrix(const json& j, const std::string& ptr, Problems& p, Index cols = -1) {
  if (!j.is_array()) {
    p.add(ptr, "expected an array of rows");
    return std::nullopt;
  }
  const Index rows = static_cast<Index>(j.size());
  if (rows > 0 && cols < 0) cols = j[0].is_array() ? static_cast<Index>(j[0].size()) : 0;
  if (cols < 0) cols = 0;
  MatrixXd M(rows, cols);
  bool ok = true;
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<size_t>(r)];
    const std::string rp = ptr + "/" + std::to_string(r);
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      p.add(rp, "expected a row of " + std::to_string(cols) + " numbers");
      ok = false;
      continue;
    }
    for (Index c = 0; c < cols; ++c)
      if (!as_number(row[static_cast<size_t>(c)], M(r, c))) {
        p.add(rp + "/" + std::to_string(c), "expected a finite number");
        ok = false;
      }
  }
  if (!ok) return std::nullopt;
  return M;
}

std::optional<WeightedGraph> parse_graph(const json& j, const std::string& ptr, Problems& p) {
  if (!j.is_object()) {
    p.add(ptr, "expected a graph object");
    return std::nullopt;
  }
  const size_t before = p.items.size();
  std::vector<EdgeSpec> edges;
  if (!j.contains("edges") || !j["edges"].is_array()) {
    p.add(ptr + "/edges", "expected an array of edges");
  } else {
    const json& je = j["edges"];
    std::set<std::pair<VertexId, VertexId>> seen;
    for (size_t k = 0; k < je.size(); ++k) {
      const std::string ep = ptr + "/edges/" + std::to_string(k);
      const json& e = je[k];
      EdgeSpec s{0, 0, 1.0};
      if (!e.is_object()) {
        p.add(ep, "expected an edge object {u, v, w}");
        continue;
      }
      bool ok = true;
      if (!e.contains("u") || !as_id(e["u"], s.u)) {
        p.add(ep + "/u", "expected an integer vertex id");
        ok = false;
      }
      if (!e.contains("v") || !as_id(e["v"], s.v)) {
        p.add(ep + "/v", "expected an integer vertex id");
        ok = false;
      }
      if (e.contains("w")) {
        if (!as_number(e["w"], s.w)) {
          p.add(ep + "/w", "expected a finite number");
          ok = false;
        } else if (!(s.w > 0.0)) {
          p.add(ep + "/w", "edge weight must be positive");
          ok = false;
        }
      }
      if (ok && s.u == s.v) {
        p.add(ep, "self-loop at vertex " + std::to_string(s.u));
        ok = false;
      }
      if (ok && !seen.insert({std::min(s.u, s.v), std::max(s.u, s.v)}).second) {
        p.add(ep, "duplicate edge between " + std::to_string(s.u) + " and " + std::to_string(s.v));
        ok = false;
      }
      edges.push_back(s);
    }
  }

  std::vector<VertexId> vertices;
  if (j.contains("vertices")) {
    const json& jv = j["vertices"];
    if (!jv.is_array()) {
      p.add(ptr + "/vertices", "expected an array of vertex ids");
    } else {
      for (size_t k = 0; k < jv.size(); ++k) {
        VertexId id;
        if (!as_id(jv[k], id))
          p.add(ptr + "/vertices/" + std::to_string(k), "expected an integer vertex id");
        else
          vertices.push_back(id);
      }
    }
  } else {
    std::set<VertexId> ids;
    for (const EdgeSpec& e : edges) ids.insert({e.u, e.v});
    vertices.assign(ids.begin(), ids.end());
  }

  std::map<VertexId, double> vw;
  if (j.contains("vertex_weights")) {
    const json& jw = j["vertex_weights"];
    if (!jw.is_object()) {
      p.add(ptr + "/vertex_weights", "expected an object mapping vertex id to weight");
    } else {
      for (const auto& [key, val] : jw.items()) {
        const std::string wp = ptr + "/vertex_weights/" + key;
        VertexId id = 0;
        const auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
        double w = 0.0;
        if (ec != std::errc() || end != key.data() + key.size())
          p.add(wp, "vertex id keys must be integers");
        else if (!as_number(val, w) || !(w > 0.0))
          p.add(wp, "vertex weight must be a positive number");
        else
          vw[id] = w;
      }
    }
  }

  if (p.items.size() != before) return std::nullopt;
  try {
    return WeightedGraph(vertices, edges, vw);
  } catch (const Error& e) {
    p.add(ptr, e.what());
    return std::nullopt;
  }
}

std::optional<SceneState> parse_frame(const json& j, const std::string& ptr, size_t index, Problems& p,
                                      std::vector<std::string>& warnings) {
  if (!j.is_object()) {
    p.add(ptr, "expected a frame object");
    return std::nullopt;
  }
  const size_t before = p.items.size();
  SceneState s;
  if (j.contains("t")) {
    if (!as_number(j["t"], s.t)) p.add(ptr + "/t", "expected a finite number");
  } else {
    s.t = static_cast<double>(index);
  }

  if (!j.contains("graph")) {
    p.add(ptr + "/graph", "missing graph");
    return std::nullopt;
  }
  const std::optional<WeightedGraph> g = parse_graph(j["graph"], ptr + "/graph", p);
  if (!g) return std::nullopt;
  s.graph = *g;
  const Index n = s.graph.num_vertices(), m = s.graph.num_edges();
  const auto& emap = s.graph.input_edge_map();

  if (!j.contains("states")) {
    p.add(ptr + "/states", "missing states");
  } else if (auto S = parse_matrix(j["states"], ptr + "/states", p)) {
    if (S->rows() != n)
      p.add(ptr + "/states", "expected " + std::to_string(n) + " rows, one per vertex, got " +
                                 std::to_string(S->rows()));
    else if (S->cols() < 1)
      p.add(ptr + "/states", "state dimension must be positive");
    else
      s.states = *S;
  }

  if (j.contains("labels")) {
    const json& jl = j["labels"];
    if (!jl.is_array() || static_cast<Index>(jl.size()) != n) {
      p.add(ptr + "/labels", "expected " + std::to_string(n) + " label strings");
    } else {
      for (size_t k = 0; k < jl.size(); ++k) {
        if (!jl[k].is_string())
          p.add(ptr + "/labels/" + std::to_string(k), "expected a string");
        else
          s.labels.push_back(jl[k].get<std::string>());
      }
    }
  }

  if (!j.contains("constraint")) {
    warnings.push_back(ptr + ": no constraint block, using the empty constraint");
    s.constraint = AffineConstraint::none(m);
  } else {
    const json& jc = j["constraint"];
    const std::string cp = ptr + "/constraint";
    if (!jc.is_object() || !jc.contains("C") || !jc.contains("tau")) {
      p.add(cp, "expected {\"C\": [[...]], \"tau\": [...]}");
    } else {
      auto C = parse_matrix(jc["C"], cp + "/C", p, jc["C"].is_array() && jc["C"].empty() ? m : -1);
      std::optional<VectorXd> tau;
      if (!jc["tau"].is_array()) {
        p.add(cp + "/tau", "expected an array of numbers");
      } else {
        VectorXd t(static_cast<Index>(jc["tau"].size()));
        bool ok = true;
        for (Index k = 0; k < t.size(); ++k)
          if (!as_number(jc["tau"][static_cast<size_t>(k)], t(k))) {
            p.add(cp + "/tau/" + std::to_string(k), "expected a finite number");
            ok = false;
          }
        if (ok) tau = t;
      }
      if (C && tau) {
        if (C->rows() > 0 && C->cols() != m) {
          p.add(cp + "/C", "expected " + std::to_string(m) + " columns, one per edge");
        } else if (C->rows() != tau->size()) {
          p.add(cp + "/tau", "expected " + std::to_string(C->rows()) + " entries, one per constraint row");
        } else if (C->rows() == 0) {
          s.constraint = AffineConstraint::none(m);
        } else {
          // Columns follow the input edge order; the cochain is orientation-free.
          MatrixXd Cc(C->rows(), m);
          for (size_t k = 0; k < emap.size(); ++k) Cc.col(emap[k].first) = C->col(static_cast<Index>(k));
          s.constraint = AffineConstraint(Cc, *tau);
        }
      }
    }
  }

  if (j.contains("transforms")) {
    const json& jt = j["transforms"];
    const std::string tp = ptr + "/transforms";
    const Index d = s.states.cols();
    if (!jt.is_array() || static_cast<Index>(jt.size()) != m) {
      p.add(tp, "expected one transform per edge");
    } else if (d > 0) {
      s.transforms.assign(static_cast<size_t>(m), MatrixXd());
      for (size_t k = 0; k < jt.size(); ++k) {
        const json& row = jt[k];
        if (!row.is_array() || static_cast<Index>(row.size()) != d * d) {
          p.add(tp + "/" + std::to_string(k), "expected " + std::to_string(d * d) + " numbers (row-major)");
          continue;
        }
        MatrixXd T(d, d);
        bool ok = true;
        for (Index r = 0; r < d; ++r)
          for (Index c = 0; c < d; ++c)
            ok = as_number(row[static_cast<size_t>(r * d + c)], T(r, c)) && ok;
        if (!ok) {
          p.add(tp + "/" + std::to_string(k), "expected finite numbers");
          continue;
        }
        const auto [e, flipped] = emap[k];
        if (flipped) {
          const Eigen::FullPivLU<MatrixXd> lu(T);
          if (!lu.isInvertible()) {
            p.add(tp + "/" + std::to_string(k), "transform of a reoriented edge must be invertible");
            continue;
          }
          T = lu.inverse();
        }
        s.transforms[static_cast<size_t>(e)] = T;
      }
    }
  }

  if (j.contains("relations")) {
    const json& jr = j["relations"];
    if (!jr.is_object()) {
      p.add(ptr + "/relations", "expected an object of named pair lists");
    } else {
      for (const auto& [name, pairs] : jr.items()) {
        const std::string rp = ptr + "/relations/" + name;
        if (!pairs.is_array()) {
          p.add(rp, "expected an array of [a, b] pairs");
          continue;
        }
        for (size_t k = 0; k < pairs.size(); ++k) {
          VertexId a = 0, b = 0;
          const json& pr = pairs[k];
          if (!pr.is_array() || pr.size() != 2 || !as_id(pr[0], a) || !as_id(pr[1], b)) {
            p.add(rp + "/" + std::to_string(k), "expected a pair of vertex ids");
          } else if (!s.graph.contains(a) || !s.graph.contains(b)) {
            p.add(rp + "/" + std::to_string(k), "unknown vertex in relation");
          } else {
            s.relations[name].emplace_back(a, b);
          }
        }
      }
    }
  }

  if (p.items.size() != before) return std::nullopt;
  try {
    s.validate();
  } catch (const Error& e) {
    p.add(ptr, e.what());
    return std::nullopt;
  }
  return s;
}

std::string line_and_column(const std::string& text, size_t byte) {
  size_t line = 1, col = 1;
  for (size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

SceneSequence parse_scene_sequence(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError("", "malformed JSON at " + line_and_column(text, e.byte == 0 ? 0 : e.byte - 1));
  }

  const json* frames = &root;
  std::string base;
  if (root.is_object()) {
    if (!root.contains("frames")) throw InputError("/frames", "missing frames array");
    frames = &root["frames"];
    base = "/frames";
  }
  if (!frames->is_array()) throw InputError(base, "expected an array of frames");

  SceneSequence out;
  Problems p;
  for (size_t k = 0; k < frames->size(); ++k) {
    auto s = parse_frame((*frames)[k], base + "/" + std::to_string(k), k, p, out.warnings);
    if (s) out.frames.push_back(std::move(*s));
  }
  if (!p.empty()) {
    std::string msg = std::to_string(p.items.size()) + " problem(s) in scene sequence";
    for (const auto& [ptr, what] : p.items) msg += "\n  " + ptr + ": " + what;
    throw InputError(p.items.front().first, msg);
  }
  for (const std::string& w : out.warnings) log(LogLevel::Warn, w);
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out) throw Error("write failed for " + path);
}

SceneSequence load_scene_sequence(const std::string& path) { return parse_scene_sequence(read_text_file(path)); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size())
    throw InvalidArgument("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(header_.size()));
  rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
      if (!quote) {
        out += cells[i];
        continue;
      }
      out += '"';
      for (char ch : cells[i]) {
        if (ch == '"') out += '"';
        out += ch;
      }
      out += '"';
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

}  // namespace fabric
