#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cae/core/types.hpp"
#include "cae/explain/classifier.hpp"
#include "cae/nets/bundle.hpp"

namespace cae::manifold {

struct CodeRow {
  std::string id;
  ClassLabel label;
  ClassStyleCode code;
};

/// Class-style codes of a dataset under one model.
struct CodeTable {
  std::string model_hash;
  int code_dim = 0;
  int class_count = 0;
  std::vector<std::string> class_names;
  std::vector<CodeRow> rows;

  /// Unique ids, every code of length code_dim, labels within class_count.
  void validate() const;
  std::vector<std::size_t> rows_of_class(int k) const;
  /// rows x code_dim.
  Eigen::MatrixXd matrix() const;
  const CodeRow* find(const std::string& id) const;
};

/// Tab-separated text:
///   #cae-codes  model_hash=<h>  code_dim=<d>  class_count=<k>  classes=<a,b>
///   id  label  v0 .. v{d-1}
std::string code_table_to_text(const CodeTable& table);
CodeTable code_table_from_text(const std::string& text);
void save_code_table(const CodeTable& table, const std::filesystem::path& path);
CodeTable load_code_table(const std::filesystem::path& path);

/// One row per sample, in dataset order.
CodeTable extract_codes(const nets::ModelBundle& bundle, const Dataset& ds);

struct ProjectionModel {
  Eigen::VectorXd mean;      // code_dim
  Eigen::MatrixXd axes;      // k x code_dim, orthonormal rows
  std::vector<double> explained;  // variance fraction per axis, non-increasing

  int k() const { return static_cast<int>(axes.rows()); }
  int code_dim() const { return static_cast<int>(axes.cols()); }
  Eigen::VectorXd project(const ClassStyleCode& code) const;
  /// Point in the projected plane back to code space (mean + axes^T p).
  ClassStyleCode back_project(const Eigen::VectorXd& p) const;
};

/// Top-k eigenvectors of the code covariance. Directions without variance
/// are reported with a zero fraction.
ProjectionModel fit_pca(const CodeTable& table, int k);

void save_projection(const ProjectionModel& model, const std::filesystem::path& path);
ProjectionModel load_projection(const std::filesystem::path& path);

enum class PathMode { kLinear };

struct PathSpec {
  ClassStyleCode start;
  ClassStyleCode end;
  int n_steps = 2;
  PathMode mode = PathMode::kLinear;

  /// Evenly spaced, point 0 = start, point n_steps-1 = end.
  std::vector<ClassStyleCode> points() const;
};

PathSpec build_path(const ClassStyleCode& start, const ClassStyleCode& end, int n_steps);

/// Coordinate mean of the class's rows.
ClassStyleCode class_centroid(const CodeTable& table, int class_index);

inline constexpr int kSmoteNeighbors = 5;

struct SmoteDraw {
  std::size_t base = 0;      // row index of a
  std::size_t neighbor = 0;  // row index of b
  double u = 0.0;
  std::vector<double> exact;  // a + u (b - a) before rounding to float
  ClassStyleCode code;
};

/// Synthetic codes by convex interpolation toward one of the k nearest
/// same-class neighbours. Needs at least two rows of the class.
std::vector<SmoteDraw> smote_draws(const CodeTable& table, int class_index, std::size_t n_new,
                                   RandomStream& rng, int k_nn = kSmoteNeighbors);
std::vector<ClassStyleCode> smote_resample(const CodeTable& table, const ClassLabel& cls,
                                           std::size_t n_new, RandomStream& rng,
                                           int k_nn = kSmoteNeighbors);

struct ClassRatio {
  int class_index = 0;
  std::size_t total = 0;
  std::size_t assigned = 0;
  double ratio() const { return total ? static_cast<double>(assigned) / total : 0.0; }
};

/// Per class: n_new SMOTE codes decoded with the individual-style code of one
/// donor sample of that class drawn from `donors` (held out from the table),
/// then classified. Empty when n_new is 0.
std::vector<ClassRatio> continuity_audit(const nets::ModelBundle& bundle, const CodeTable& table,
                                         const Dataset& donors,
                                         const explain::BlackBoxClassifier& classifier,
                                         std::size_t n_new, RandomStream& rng);

struct PervasivenessReport {
  std::size_t total = 0;
  std::size_t assigned = 0;
  std::vector<ClassRatio> per_class;
  double ratio() const { return total ? static_cast<double>(assigned) / total : 0.0; }
};

/// Every table code decoded against combos_per_code distinct random donors
/// from `donors`; counts decodes classified as the code's class. max_codes
/// (0 = all) caps the number of table rows used, drawn uniformly.
PervasivenessReport pervasiveness_audit(const nets::ModelBundle& bundle, const CodeTable& table,
                                        const Dataset& donors,
                                        const explain::BlackBoxClassifier& classifier,
                                        std::size_t combos_per_code, RandomStream& rng,
                                        std::size_t max_codes = 0);

struct SeparabilityReport {
  double silhouette = 0.0;
  double probe_accuracy = 0.0;  // held-out, pooled over folds
  int folds = 0;
};

/// Silhouette on raw codes (Euclidean) and k-fold accuracy of a multinomial
/// logistic probe trained on the codes alone.
SeparabilityReport separability_report(const CodeTable& table, RandomStream& rng, int folds = 5);

double silhouette_score(const Eigen::MatrixXd& x, const std::vector<int>& labels);

/// Multinomial logistic regression on standardized features.
class LogisticProbe {
 public:
  void fit(const Eigen::MatrixXd& x, const std::vector<int>& labels, int class_count,
           int iterations = 500, double l2 = 1e-4);
  int predict(const Eigen::VectorXd& row) const;

 private:
  Eigen::VectorXd mu_, sigma_;
  Eigen::MatrixXd w_;  // (d + 1) x K
};

}  // namespace cae::manifold
