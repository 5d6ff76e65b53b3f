#pragma once

// Lattice ("quilt") parameter decompositions.
//
// A parameter indexed by a cohort multi-index kappa over a D-dimensional
// lattice is stored as a sum of component tensors, one per subset S of the
// lattice dimensions with |S| <= max_order. Component S is indexed only by
// the coordinates in S, so the global term is a single row and an order-1
// term over a dimension of size n has n rows. Every row holds value_size
// scalars (e.g. one per survival interval, or interval x feature).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace quiltsurv {

struct LatticeDim {
  std::string name;
  int size = 1;
};

class LatticeSpec {
 public:
  LatticeSpec() = default;
  LatticeSpec(std::vector<LatticeDim> dims, int max_order);

  const std::vector<LatticeDim>& dims() const { return dims_; }
  int num_dims() const { return static_cast<int>(dims_.size()); }
  int max_order() const { return max_order_; }
  std::size_t cell_count() const { return cell_count_; }

  /// Row-major cell id; throws std::out_of_range for coordinates outside the lattice.
  std::size_t cell_index(std::span<const int> kappa) const;
  std::vector<int> cell_coords(std::size_t cell) const;

  friend bool operator==(const LatticeSpec&, const LatticeSpec&);

 private:
  std::vector<LatticeDim> dims_;
  int max_order_ = 0;
  std::size_t cell_count_ = 1;
};

/// One retained dimension subset and where its tensor lives in the flat parameter vector.
struct Component {
  std::vector<int> dims;             // indices into LatticeSpec::dims(), ascending
  std::vector<std::size_t> strides;  // row-major strides over `dims`
  std::size_t rows = 1;              // product of the sizes of `dims`
  std::size_t offset = 0;            // first scalar in the flat vector
  int order() const { return static_cast<int>(dims.size()); }
};

/// Index arithmetic for a decomposition; holds no parameter values.
class QuiltLayout {
 public:
  QuiltLayout() = default;
  QuiltLayout(LatticeSpec lattice, std::size_t value_size);

  const LatticeSpec& lattice() const { return lattice_; }
  std::size_t value_size() const { return value_size_; }
  /// Total scalar count: sum over components of rows * value_size.
  std::size_t size() const { return size_; }
  const std::vector<Component>& components() const { return components_; }

  /// Offset of the row of `component` touched by cell `kappa`.
  std::size_t row_offset(const Component& component, std::span<const int> kappa) const;

  /// Row offsets of every component for one cell, in component order.
  std::vector<std::size_t> cell_row_offsets(std::span<const int> kappa) const;

  void assemble(std::span<const double> params, std::span<const int> kappa,
                std::span<double> out) const;

  /// Adjoint of assemble: adds cell_grad into the rows of every component touched by kappa.
  void scatter(std::span<double> grad, std::span<const int> kappa,
               std::span<const double> cell_grad) const;

  /// Interaction order of every scalar in the flat vector.
  std::vector<int> scalar_orders() const;

 private:
  LatticeSpec lattice_;
  std::size_t value_size_ = 1;
  std::size_t size_ = 0;
  std::vector<Component> components_;
};

/// A layout together with owned component values.
class LatticeDecomposition {
 public:
  LatticeDecomposition() = default;
  LatticeDecomposition(LatticeSpec lattice, std::size_t value_size);
  LatticeDecomposition(QuiltLayout layout, std::vector<double> values);

  const QuiltLayout& layout() const { return layout_; }
  const LatticeSpec& lattice() const { return layout_.lattice(); }
  std::size_t value_size() const { return layout_.value_size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// Scalars of component `index` (rows * value_size).
  std::span<double> component(std::size_t index);
  std::span<const double> component(std::size_t index) const;

  std::vector<double> assemble(std::span<const int> kappa) const;

  /// Writes <prefix>.json (lattice, subset list) and <prefix>.bin (tensor blob).
  void save(const std::filesystem::path& prefix) const;
  static LatticeDecomposition load(const std::filesystem::path& prefix);

  /// CSV dump: one row per lattice cell with its coordinates and assembled values.
  void dump_cells(std::ostream& out) const;

 private:
  QuiltLayout layout_;
  std::vector<double> values_;
};

nlohmann::json lattice_to_json(const LatticeSpec& lattice);
LatticeSpec lattice_from_json(const nlohmann::json& j);

/// Prior scale for a component of interaction order `order`: base_scale * decay^order.
double order_scale(int order, double base_scale, double decay);

/// Independent Gaussian log density of every component scalar at its order's scale.
double prior_log_density(const LatticeDecomposition& decomposition, double base_scale,
                         double decay);

/// Same density over a flat parameter slice laid out by `layout`; adds the gradient into
/// `grad` when it is non-empty.
double prior_log_density(const QuiltLayout& layout, std::span<const double> params,
                         double base_scale, double decay, std::span<double> grad = {});

/// Correlation between the assembled values of two cells that share every component of
/// order <= shared_order and whose order-o sums have correlation rho_o above that.
/// order_variances[o] is the variance of the order-o sum; shared_order may be -1.
double implied_correlation(std::span<const double> order_variances, int shared_order,
                           std::span<const double> within_order_corr);

/// Inputs to implied_correlation for two concrete cells of a lattice whose order-o
/// components all have prior scale component_scales[o].
struct CorrelationStructure {
  std::vector<double> order_variances;
  int shared_order = -1;
  std::vector<double> within_order_corr;
};
CorrelationStructure correlation_structure(const LatticeSpec& lattice,
                                           std::span<const int> kappa1,
                                           std::span<const int> kappa2,
                                           std::span<const double> component_scales);

struct HorseshoeState {
  std::vector<double> coefficients;
  std::vector<double> local_scales;
  double global_scale = 1.0;
};

/// sum_j [log N(beta_j | 0, lambda_j tau) + log HalfCauchy(lambda_j)] + log HalfCauchy(tau).
double horseshoe_log_density(const HorseshoeState& state);

}  // namespace quiltsurv
