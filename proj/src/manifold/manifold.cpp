#include "cae/manifold/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "cae/core/archive.hpp"

namespace cae::manifold {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kDecodeChunk = 64;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

torch::Tensor codes_tensor(const std::vector<const ClassStyleCode*>& codes) {
  const auto d = static_cast<std::int64_t>(codes.front()->dim());
  auto t = torch::empty({static_cast<std::int64_t>(codes.size()), d}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (const auto* c : codes) p = std::copy(c->values.begin(), c->values.end(), p);
  return t;
}

torch::Tensor indiv_codes(const nets::ModelBundle& bundle, const std::vector<ImageTensor>& images) {
  return nets::encode_indiv_batch(bundle, nets::images_to_tensor(images, bundle.dtype()));
}

void check_classifier(const explain::BlackBoxClassifier& classifier, const CodeTable& table) {
  if (classifier.class_count() != table.class_count) {
    throw Error("classifier covers " + std::to_string(classifier.class_count()) +
                " classes, table has " + std::to_string(table.class_count));
  }
}

// Decodes (code, individual code) pairs in chunks and returns the argmax class of each.
class DecodeClassifyQueue {
 public:
  DecodeClassifyQueue(const nets::ModelBundle& bundle, const explain::BlackBoxClassifier& classifier)
      : bundle_(bundle), classifier_(classifier) {}

  void push(const ClassStyleCode& code, const torch::Tensor& indiv, int expected) {
    codes_.push_back(code);
    indiv_.push_back(indiv);
    expected_.push_back(expected);
    if (static_cast<std::int64_t>(codes_.size()) == kDecodeChunk) flush();
  }

  void flush() {
    if (codes_.empty()) return;
    std::vector<const ClassStyleCode*> ptrs;
    for (const auto& c : codes_) ptrs.push_back(&c);
    auto frames = nets::decode_batch(bundle_, codes_tensor(ptrs).to(bundle_.dtype()),
                                     torch::stack(indiv_));
    auto probs = classifier_.predict_tensor(frames.to(torch::kFloat32));
    auto pred = probs.argmax(1);
    for (std::size_t i = 0; i < codes_.size(); ++i) {
      results_.emplace_back(expected_[i], static_cast<int>(pred[static_cast<std::int64_t>(i)].item<std::int64_t>()));
    }
    codes_.clear();
    indiv_.clear();
    expected_.clear();
  }

  const std::vector<std::pair<int, int>>& results() {
    flush();
    return results_;
  }

 private:
  const nets::ModelBundle& bundle_;
  const explain::BlackBoxClassifier& classifier_;
  std::vector<ClassStyleCode> codes_;
  std::vector<torch::Tensor> indiv_;
  std::vector<int> expected_;
  std::vector<std::pair<int, int>> results_;  // (expected, predicted)
};

void write_split_doubles(Archive& a, const std::string& name, const Eigen::MatrixXd& m) {
  // float32 archive entries; a residual entry keeps the doubles near-exact.
  ArchiveEntry hi{name, {m.rows(), m.cols()}, {}};
  ArchiveEntry lo{name + ".lo", {m.rows(), m.cols()}, {}};
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float h = static_cast<float>(m(r, c));
      hi.data.push_back(h);
      lo.data.push_back(static_cast<float>(m(r, c) - static_cast<double>(h)));
    }
  }
  a.entries.push_back(std::move(hi));
  a.entries.push_back(std::move(lo));
}

Eigen::MatrixXd read_split_doubles(const Archive& a, const std::string& name) {
  const auto& hi = a.entry(name);
  const auto& lo = a.entry(name + ".lo");
  if (hi.shape.size() != 2 || hi.shape != lo.shape) throw Error("malformed matrix entry " + name);
  Eigen::MatrixXd m(hi.shape[0], hi.shape[1]);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c, ++i) {
      m(r, c) = static_cast<double>(hi.data[i]) + static_cast<double>(lo.data[i]);
    }
  }
  return m;
}

}  // namespace

void CodeTable::validate() const {
  if (code_dim < 1) throw Error("code table: code_dim must be positive");
  if (class_count < 1) throw Error("code table: class_count must be positive");
  std::set<std::string> ids;
  for (const auto& r : rows) {
    if (!ids.insert(r.id).second) throw Error("code table: duplicate id " + r.id);
    if (static_cast<int>(r.code.dim()) != code_dim) {
      throw Error("code table: row " + r.id + " has a code of length " +
                  std::to_string(r.code.dim()));
    }
    if (r.label.index < 0 || r.label.index >= class_count) {
      throw Error("code table: row " + r.id + " has an out-of-range label");
    }
  }
}

std::vector<std::size_t> CodeTable::rows_of_class(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].label.index == k) out.push_back(i);
  }
  return out;
}

Eigen::MatrixXd CodeTable::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), code_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < code_dim; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i].code.values[j];
  }
  return m;
}

const CodeRow* CodeTable::find(const std::string& id) const {
  for (const auto& r : rows) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::string code_table_to_text(const CodeTable& table) {
  table.validate();
  std::ostringstream os;
  os << "#cae-codes\tmodel_hash=" << table.model_hash << "\tcode_dim=" << table.code_dim
     << "\tclass_count=" << table.class_count << "\tclasses=" << join(table.class_names, ',')
     << "\n";
  // 9 significant digits round-trip a float exactly.
  os << std::setprecision(9);
  for (const auto& r : table.rows) {
    os << r.id << '\t' << r.label.index;
    for (float v : r.code.values) os << '\t' << v;
    os << '\n';
  }
  return os.str();
}

CodeTable code_table_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("#cae-codes", 0) != 0) {
    throw Error("not a code table (missing #cae-codes header)");
  }
  CodeTable t;
  bool have_dim = false, have_k = false;
  for (const auto& field : split(line, '\t')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    if (key == "model_hash") {
      t.model_hash = value;
    } else if (key == "code_dim") {
      t.code_dim = std::stoi(value);
      have_dim = true;
    } else if (key == "class_count") {
      t.class_count = std::stoi(value);
      have_k = true;
    } else if (key == "classes" && !value.empty()) {
      t.class_names = split(value, ',');
    }
  }
  if (!have_dim || !have_k) throw Error("code table header lacks code_dim or class_count");
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (static_cast<int>(cols.size()) != 2 + t.code_dim) {
      throw Error("code table line " + std::to_string(line_no) + ": expected " +
                  std::to_string(2 + t.code_dim) + " columns");
    }
    std::vector<float> v;
    for (int j = 0; j < t.code_dim; ++j) v.push_back(std::stof(cols[2 + j]));
    t.rows.push_back({cols[0], ClassLabel(std::stoi(cols[1]), t.class_count), ClassStyleCode(v)});
  }
  t.validate();
  return t;
}

void save_code_table(const CodeTable& table, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << code_table_to_text(table);
}

CodeTable load_code_table(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return code_table_from_text(ss.str());
}

CodeTable extract_codes(const nets::ModelBundle& bundle, const Dataset& ds) {
  CodeTable t;
  t.model_hash = bundle.model_hash();
  t.code_dim = bundle.config.code_dim;
  t.class_count = bundle.config.class_count;
  t.class_names = bundle.meta.class_names;
  if (ds.empty()) return t;
  if (ds.class_count != bundle.config.class_count) {
    throw Error("dataset class count differs from the model's");
  }
  std::vector<ImageTensor> images;
  for (const auto& s : ds.samples) {
    nets::check_image(bundle, s.image);
    images.push_back(s.image);
  }
  const auto codes =
      nets::encode_class_batch(bundle, nets::images_to_tensor(images, bundle.dtype()));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    t.rows.push_back({ds.samples[i].id, ds.samples[i].label,
                      nets::tensor_to_code(codes[static_cast<std::int64_t>(i)])});
  }
  return t;
}

Eigen::VectorXd ProjectionModel::project(const ClassStyleCode& code) const {
  if (static_cast<int>(code.dim()) != code_dim()) throw Error("projection: code length mismatch");
  Eigen::VectorXd x(code_dim());
  for (int j = 0; j < code_dim(); ++j) x[j] = code.values[j];
  return axes * (x - mean);
}

ClassStyleCode ProjectionModel::back_project(const Eigen::VectorXd& p) const {
  if (p.size() != k()) throw Error("projection: point has " + std::to_string(p.size()) + " coordinates, expected " + std::to_string(k()));
  const Eigen::VectorXd x = mean + axes.transpose() * p;
  std::vector<float> v(static_cast<std::size_t>(x.size()));
  for (Eigen::Index j = 0; j < x.size(); ++j) v[static_cast<std::size_t>(j)] = static_cast<float>(x[j]);
  return ClassStyleCode(v);
}

ProjectionModel fit_pca(const CodeTable& table, int k) {
  if (k < 1 || k > table.code_dim) {
    throw Error("PCA: k must lie in [1, " + std::to_string(table.code_dim) + "]");
  }
  if (static_cast<int>(table.rows.size()) < k) throw Error("PCA: fewer rows than components");
  const Eigen::MatrixXd x = table.matrix();
  ProjectionModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  const double denom = std::max<double>(1.0, static_cast<double>(x.rows()) - 1.0);
  const Eigen::MatrixXd cov = centered.transpose() * centered / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("PCA: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);
  const double total = values.sum();
  const int d = table.code_dim;
  m.axes.resize(k, d);
  for (int i = 0; i < k; ++i) {
    m.axes.row(i) = eig.eigenvectors().col(d - 1 - i).transpose();
    m.explained.push_back(total > 0.0 ? values[d - 1 - i] / total : 0.0);
  }
  return m;
}

void save_projection(const ProjectionModel& model, const fs::path& path) {
  Archive a;
  a.set("format", "cae-projection");
  a.set("version", "1");
  a.set("k", std::to_string(model.k()));
  a.set("code_dim", std::to_string(model.code_dim()));
  std::ostringstream ex;
  ex << std::setprecision(17);
  for (std::size_t i = 0; i < model.explained.size(); ++i) ex << (i ? "," : "") << model.explained[i];
  a.set("explained", ex.str());
  write_split_doubles(a, "mean", model.mean.transpose());
  write_split_doubles(a, "axes", model.axes);
  write_archive(path, a);
}

ProjectionModel load_projection(const fs::path& path) {
  const Archive a = read_archive(path);
  if (a.get("format") != "cae-projection") throw Error("not a projection archive: " + path.string());
  if (a.get("version") != "1") throw Error("unsupported projection version " + a.get("version"));
  ProjectionModel m;
  m.mean = read_split_doubles(a, "mean").row(0).transpose();
  m.axes = read_split_doubles(a, "axes");
  for (const auto& s : split(a.get("explained"), ',')) m.explained.push_back(std::stod(s));
  if (m.k() != std::stoi(a.get("k")) || m.code_dim() != std::stoi(a.get("code_dim")) ||
      m.mean.size() != m.code_dim() || static_cast<int>(m.explained.size()) != m.k()) {
    throw Error("projection archive sizes are inconsistent");
  }
  return m;
}

std::vector<ClassStyleCode> PathSpec::points() const {
  if (n_steps < 2) throw Error("a path needs at least two steps");
  if (start.dim() != end.dim()) throw Error("path endpoints differ in length");
  std::vector<ClassStyleCode> out;
  out.reserve(static_cast<std::size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i) {
    if (i == n_steps - 1) {
      out.push_back(end);
      break;
    }
    const double t = static_cast<double>(i) / (n_steps - 1);
    std::vector<float> v(start.dim());
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double a = start.values[j];
      v[j] = static_cast<float>(a + t * (static_cast<double>(end.values[j]) - a));
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

PathSpec build_path(const ClassStyleCode& start, const ClassStyleCode& end, int n_steps) {
  if (start.dim() != end.dim()) {
    throw Error("path endpoints differ in length (" + std::to_string(start.dim()) + " vs " +
                std::to_string(end.dim()) + ")");
  }
  if (start.dim() == 0) throw Error("path endpoints are empty");
  if (n_steps < 2) throw Error("a path needs at least two steps");
  return PathSpec{start, end, n_steps, PathMode::kLinear};
}

ClassStyleCode class_centroid(const CodeTable& table, int class_index) {
  const auto idx = table.rows_of_class(class_index);
  if (idx.empty()) throw Error("class " + std::to_string(class_index) + " has no codes");
  std::vector<double> acc(static_cast<std::size_t>(table.code_dim), 0.0);
  for (auto i : idx) {
    for (int j = 0; j < table.code_dim; ++j) acc[j] += table.rows[i].code.values[j];
  }
  std::vector<float> v(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) v[j] = static_cast<float>(acc[j] / idx.size());
  return ClassStyleCode(v);
}

std::vector<SmoteDraw> smote_draws(const CodeTable& table, int class_index, std::size_t n_new,
                                   RandomStream& rng, int k_nn) {
  if (k_nn < 1) throw Error("SMOTE needs at least one neighbour");
  const auto idx = table.rows_of_class(class_index);
  if (idx.size() < 2) {
    throw Error("SMOTE needs at least two codes of class " + std::to_string(class_index));
  }
  const std::size_t m = idx.size();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_nn), m - 1);
  const Eigen::MatrixXd x = table.matrix();

  std::vector<std::vector<std::size_t>> neighbours(m);
  auto neighbours_of = [&](std::size_t a) -> const std::vector<std::size_t>& {
    auto& nb = neighbours[a];
    if (!nb.empty()) return nb;
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(m - 1);
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a) continue;
      d.emplace_back((x.row(static_cast<Eigen::Index>(idx[a])) - x.row(static_cast<Eigen::Index>(idx[b]))).squaredNorm(), b);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    for (std::size_t i = 0; i < k; ++i) nb.push_back(d[i].second);
    return nb;
  };

  std::vector<SmoteDraw> out;
  out.reserve(n_new);
  for (std::size_t n = 0; n < n_new; ++n) {
    const std::size_t a = rng.below(m);
    const std::size_t b = neighbours_of(a)[rng.below(k)];
    SmoteDraw draw;
    draw.base = idx[a];
    draw.neighbor = idx[b];
    draw.u = rng.uniform();
    const auto& va = table.rows[draw.base].code.values;
    const auto& vb = table.rows[draw.neighbor].code.values;
    std::vector<float> v(va.size());
    for (std::size_t j = 0; j < va.size(); ++j) {
      const double e = va[j] + draw.u * (static_cast<double>(vb[j]) - va[j]);
      draw.exact.push_back(e);
      v[j] = static_cast<float>(e);
    }
    draw.code = ClassStyleCode(std::move(v));
    out.push_back(std::move(draw));
  }
  return out;
}

std::vector<ClassStyleCode> smote_resample(const CodeTable& table, const ClassLabel& cls,
                                           std::size_t n_new, RandomStream& rng, int k_nn) {
  std::vector<ClassStyleCode> out;
  for (auto& d : smote_draws(table, cls.index, n_new, rng, k_nn)) out.push_back(std::move(d.code));
  return out;
}

std::vector<ClassRatio> continuity_audit(const nets::ModelBundle& bundle, const CodeTable& table,
                                         const Dataset& donors,
                                         const explain::BlackBoxClassifier& classifier,
                                         std::size_t n_new, RandomStream& rng) {
  if (n_new == 0) return {};
  check_classifier(classifier, table);
  const auto donor_idx = donors.indices_by_class();
  std::vector<ClassRatio> out;
  for (int k = 0; k < table.class_count; ++k) {
    if (table.rows_of_class(k).empty()) continue;
    if (static_cast<std::size_t>(k) >= donor_idx.size() || donor_idx[static_cast<std::size_t>(k)].empty()) {
      throw Error("no donor sample of class " + std::to_string(k));
    }
    const auto& pool = donor_idx[static_cast<std::size_t>(k)];
    const auto& donor = donors.samples[pool[rng.below(pool.size())]];
    nets::check_image(bundle, donor.image);
    const auto s = indiv_codes(bundle, {donor.image})[0];
    const auto codes = smote_resample(table, ClassLabel(k, table.class_count), n_new, rng);
    DecodeClassifyQueue queue(bundle, classifier);
    for (const auto& c : codes) queue.push(c, s, k);
    ClassRatio r;
    r.class_index = k;
    for (const auto& [expected, predicted] : queue.results()) {
      ++r.total;
      if (expected == predicted) ++r.assigned;
    }
    out.push_back(r);
  }
  return out;
}

PervasivenessReport pervasiveness_audit(const nets::ModelBundle& bundle, const CodeTable& table,
                                        const Dataset& donors,
                                        const explain::BlackBoxClassifier& classifier,
                                        std::size_t combos_per_code, RandomStream& rng,
                                        std::size_t max_codes) {
  check_classifier(classifier, table);
  if (combos_per_code == 0) throw Error("combos_per_code must be positive");
  if (donors.size() < combos_per_code) {
    throw Error("pervasiveness audit needs " + std::to_string(combos_per_code) +
                " donors, got " + std::to_string(donors.size()));
  }
  std::vector<std::size_t> rows(table.rows.size());
  std::iota(rows.begin(), rows.end(), 0);
  if (max_codes > 0 && max_codes < rows.size()) {
    rng.shuffle(rows);
    rows.resize(max_codes);
    std::sort(rows.begin(), rows.end());
  }

  std::vector<ImageTensor> donor_images;
  for (const auto& s : donors.samples) {
    nets::check_image(bundle, s.image);
    donor_images.push_back(s.image);
  }
  const auto indiv = indiv_codes(bundle, donor_images);

  PervasivenessReport report;
  report.per_class.resize(static_cast<std::size_t>(table.class_count));
  for (int k = 0; k < table.class_count; ++k) report.per_class[static_cast<std::size_t>(k)].class_index = k;
  DecodeClassifyQueue queue(bundle, classifier);
  std::vector<std::size_t> pool(donors.size());
  for (auto r : rows) {
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t j = 0; j < combos_per_code; ++j) {
      std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
      queue.push(table.rows[r].code, indiv[static_cast<std::int64_t>(pool[j])],
                 table.rows[r].label.index);
    }
  }
  for (const auto& [expected, predicted] : queue.results()) {
    auto& c = report.per_class[static_cast<std::size_t>(expected)];
    ++c.total;
    ++report.total;
    if (expected == predicted) {
      ++c.assigned;
      ++report.assigned;
    }
  }
  return report;
}

double silhouette_score(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (labels.size() != n) throw Error("silhouette: label count mismatch");
  if (n < 2) return 0.0;
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  int populated = 0;
  for (auto s : sizes) populated += s > 0;
  if (populated < 2) return 0.0;

  double total = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sums[static_cast<std::size_t>(labels[j])] +=
          (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
    }
    const auto own = static_cast<std::size_t>(labels[i]);
    if (sizes[own] < 2) continue;  // singleton clusters score 0
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

void LogisticProbe::fit(const Eigen::MatrixXd& x, const std::vector<int>& labels, int class_count,
                        int iterations, double l2) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n == 0) throw Error("logistic probe: no training rows");
  mu_ = x.colwise().mean().transpose();
  sigma_ = ((x.rowwise() - mu_.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (sigma_[j] <= 1e-12) sigma_[j] = 1.0;
  }
  Eigen::MatrixXd z(n, d + 1);
  z.leftCols(d) = (x.rowwise() - mu_.transpose()).array().rowwise() / sigma_.transpose().array();
  z.col(d).setOnes();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, class_count);
  for (Eigen::Index i = 0; i < n; ++i) y(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  w_ = Eigen::MatrixXd::Zero(d + 1, class_count);
  const double lr = 0.5;
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd logits = z * w_;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - mx).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    Eigen::MatrixXd grad = z.transpose() * (logits - y) / static_cast<double>(n);
    grad.topRows(d) += l2 * w_.topRows(d);
    w_ -= lr * grad;
  }
}

int LogisticProbe::predict(const Eigen::VectorXd& row) const {
  Eigen::VectorXd z(row.size() + 1);
  z.head(row.size()) = (row - mu_).array() / sigma_.array();
  z[row.size()] = 1.0;
  Eigen::VectorXd logits = w_.transpose() * z;
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

SeparabilityReport separability_report(const CodeTable& table, RandomStream& rng, int folds) {
  table.validate();
  std::set<int> classes;
  for (const auto& r : table.rows) classes.insert(r.label.index);
  if (classes.size() < 2) throw Error("separability needs at least two populated classes");
  if (folds < 2) throw Error("separability needs at least two folds");
  const Eigen::MatrixXd x = table.matrix();
  std::vector<int> labels;
  for (const auto& r : table.rows) labels.push_back(r.label.index);

  SeparabilityReport rep;
  rep.folds = std::min<int>(folds, static_cast<int>(table.rows.size()));
  rep.silhouette = silhouette_score(x, labels);

  std::vector<std::size_t> order(table.rows.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t correct = 0;
  for (int f = 0; f < rep.folds; ++f) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (static_cast<int>(i % static_cast<std::size_t>(rep.folds)) == f ? test_rows : train_rows)
          .push_back(static_cast<Eigen::Index>(order[i]));
    }
    Eigen::MatrixXd xt(static_cast<Eigen::Index>(train_rows.size()), x.cols());
    std::vector<int> yt;
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      xt.row(static_cast<Eigen::Index>(i)) = x.row(train_rows[i]);
      yt.push_back(labels[static_cast<std::size_t>(train_rows[i])]);
    }
    LogisticProbe probe;
    probe.fit(xt, yt, table.class_count);
    for (auto r : test_rows) {
      if (probe.predict(x.row(r).transpose()) == labels[static_cast<std::size_t>(r)]) ++correct;
    }
  }
  rep.probe_accuracy = static_cast<double>(correct) / static_cast<double>(table.rows.size());
  return rep;
}

}  // namespace cae::manifold
