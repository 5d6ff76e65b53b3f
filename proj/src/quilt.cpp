#include "quiltsurv/quilt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "quiltsurv/common.hpp"
#include "quiltsurv/io.hpp"

namespace quiltsurv {

namespace {

constexpr std::uint32_t kBlobVersion = 1;
constexpr std::string_view kBlobTag = "QLTB";

// All ascending index subsets of {0..n-1} of size k, lexicographic.
void subsets_of_size(int n, int k, std::vector<std::vector<int>>& out) {
  std::vector<int> current(k);
  for (int i = 0; i < k; ++i) current[i] = i;
  if (k > n) return;
  while (true) {
    out.push_back(current);
    int i = k - 1;
    while (i >= 0 && current[i] == n - k + i) --i;
    if (i < 0) return;
    ++current[i];
    for (int j = i + 1; j < k; ++j) current[j] = current[j - 1] + 1;
  }
}

}  // namespace

LatticeSpec::LatticeSpec(std::vector<LatticeDim> dims, int max_order)
    : dims_(std::move(dims)), max_order_(max_order) {
  if (max_order_ < 0 || max_order_ > static_cast<int>(dims_.size()))
    throw std::invalid_argument("lattice max_order must lie in [0, number of dimensions]");
  for (const auto& d : dims_) {
    if (d.size < 1) throw std::invalid_argument("lattice dimension '" + d.name + "' has size < 1");
    cell_count_ *= static_cast<std::size_t>(d.size);
  }
}

std::size_t LatticeSpec::cell_index(std::span<const int> kappa) const {
  if (kappa.size() != dims_.size())
    throw std::out_of_range("multi-index has " + std::to_string(kappa.size()) +
                            " coordinates, lattice has " + std::to_string(dims_.size()));
  std::size_t cell = 0;
  for (std::size_t d = 0; d < dims_.size(); ++d) {
    if (kappa[d] < 0 || kappa[d] >= dims_[d].size)
      throw std::out_of_range("coordinate " + std::to_string(kappa[d]) + " outside dimension '" +
                              dims_[d].name + "' of size " + std::to_string(dims_[d].size));
    cell = cell * static_cast<std::size_t>(dims_[d].size) + static_cast<std::size_t>(kappa[d]);
  }
  return cell;
}

std::vector<int> LatticeSpec::cell_coords(std::size_t cell) const {
  if (cell >= cell_count_) throw std::out_of_range("cell id outside lattice");
  std::vector<int> kappa(dims_.size());
  for (std::size_t d = dims_.size(); d-- > 0;) {
    kappa[d] = static_cast<int>(cell % static_cast<std::size_t>(dims_[d].size));
    cell /= static_cast<std::size_t>(dims_[d].size);
  }
  return kappa;
}

bool operator==(const LatticeSpec& a, const LatticeSpec& b) {
  if (a.max_order_ != b.max_order_ || a.dims_.size() != b.dims_.size()) return false;
  for (std::size_t i = 0; i < a.dims_.size(); ++i)
    if (a.dims_[i].name != b.dims_[i].name || a.dims_[i].size != b.dims_[i].size) return false;
  return true;
}

QuiltLayout::QuiltLayout(LatticeSpec lattice, std::size_t value_size)
    : lattice_(std::move(lattice)), value_size_(value_size) {
  if (value_size_ == 0) throw std::invalid_argument("decomposition value_size must be positive");
  std::vector<std::vector<int>> subsets;
  for (int order = 0; order <= lattice_.max_order(); ++order)
    subsets_of_size(lattice_.num_dims(), order, subsets);
  for (auto& s : subsets) {
    Component c;
    c.dims = std::move(s);
    c.strides.assign(c.dims.size(), 1);
    for (std::size_t i = c.dims.size(); i-- > 0;) {
      c.strides[i] = c.rows;
      c.rows *= static_cast<std::size_t>(lattice_.dims()[c.dims[i]].size);
    }
    c.offset = size_;
    size_ += c.rows * value_size_;
    components_.push_back(std::move(c));
  }
}

std::size_t QuiltLayout::row_offset(const Component& component,
                                    std::span<const int> kappa) const {
  std::size_t row = 0;
  for (std::size_t i = 0; i < component.dims.size(); ++i)
    row += component.strides[i] * static_cast<std::size_t>(kappa[component.dims[i]]);
  return component.offset + row * value_size_;
}

std::vector<std::size_t> QuiltLayout::cell_row_offsets(std::span<const int> kappa) const {
  (void)lattice_.cell_index(kappa);  // bounds check
  std::vector<std::size_t> offsets;
  offsets.reserve(components_.size());
  for (const auto& c : components_) offsets.push_back(row_offset(c, kappa));
  return offsets;
}

void QuiltLayout::assemble(std::span<const double> params, std::span<const int> kappa,
                           std::span<double> out) const {
  if (params.size() != size_) throw std::invalid_argument("parameter slice size mismatch");
  if (out.size() != value_size_) throw std::invalid_argument("assemble output size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t off : cell_row_offsets(kappa))
    for (std::size_t v = 0; v < value_size_; ++v) out[v] += params[off + v];
}

void QuiltLayout::scatter(std::span<double> grad, std::span<const int> kappa,
                          std::span<const double> cell_grad) const {
  if (grad.size() != size_) throw std::invalid_argument("gradient slice size mismatch");
  if (cell_grad.size() != value_size_) throw std::invalid_argument("cell gradient size mismatch");
  for (std::size_t off : cell_row_offsets(kappa))
    for (std::size_t v = 0; v < value_size_; ++v) grad[off + v] += cell_grad[v];
}

std::vector<int> QuiltLayout::scalar_orders() const {
  std::vector<int> orders(size_);
  for (const auto& c : components_)
    std::fill_n(orders.begin() + static_cast<std::ptrdiff_t>(c.offset), c.rows * value_size_,
                c.order());
  return orders;
}

LatticeDecomposition::LatticeDecomposition(LatticeSpec lattice, std::size_t value_size)
    : layout_(std::move(lattice), value_size), values_(layout_.size(), 0.0) {}

LatticeDecomposition::LatticeDecomposition(QuiltLayout layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size())
    throw std::invalid_argument("decomposition values do not match layout size");
}

std::span<double> LatticeDecomposition::component(std::size_t index) {
  const auto& c = layout_.components().at(index);
  return std::span<double>(values_).subspan(c.offset, c.rows * layout_.value_size());
}

std::span<const double> LatticeDecomposition::component(std::size_t index) const {
  const auto& c = layout_.components().at(index);
  return std::span<const double>(values_).subspan(c.offset, c.rows * layout_.value_size());
}

std::vector<double> LatticeDecomposition::assemble(std::span<const int> kappa) const {
  std::vector<double> out(layout_.value_size());
  layout_.assemble(values_, kappa, out);
  return out;
}

nlohmann::json lattice_to_json(const LatticeSpec& lattice) {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& d : lattice.dims()) dims.push_back({{"name", d.name}, {"size", d.size}});
  return {{"dims", dims}, {"max_order", lattice.max_order()}};
}

LatticeSpec lattice_from_json(const nlohmann::json& j) {
  std::vector<LatticeDim> dims;
  for (const auto& d : j.at("dims"))
    dims.push_back({d.at("name").get<std::string>(), d.at("size").get<int>()});
  return LatticeSpec(std::move(dims), j.at("max_order").get<int>());
}

void LatticeDecomposition::save(const std::filesystem::path& prefix) const {
  auto blob = prefix;
  blob += ".bin";
  auto manifest_path = prefix;
  manifest_path += ".json";
  nlohmann::json subsets = nlohmann::json::array();
  for (const auto& c : layout_.components()) {
    nlohmann::json names = nlohmann::json::array();
    for (int d : c.dims) names.push_back(lattice().dims()[d].name);
    subsets.push_back({{"dims", names}, {"offset", c.offset}, {"rows", c.rows}});
  }
  io::write_blob(blob, kBlobTag, kBlobVersion, values_);
  io::write_json(manifest_path, {{"format", "quilt-decomposition"},
                                 {"version", kBlobVersion},
                                 {"lattice", lattice_to_json(lattice())},
                                 {"value_size", layout_.value_size()},
                                 {"subsets", subsets},
                                 {"blob", blob.filename().string()}});
}

LatticeDecomposition LatticeDecomposition::load(const std::filesystem::path& prefix) {
  auto manifest_path = prefix;
  manifest_path += ".json";
  const auto manifest = io::read_json(manifest_path);
  QuiltLayout layout(lattice_from_json(manifest.at("lattice")),
                     manifest.at("value_size").get<std::size_t>());
  const auto blob = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  auto values = io::read_blob(blob, kBlobTag, kBlobVersion);
  if (values.size() != layout.size())
    throw DataError(blob.string() + ": blob size does not match manifest");
  return LatticeDecomposition(std::move(layout), std::move(values));
}

void LatticeDecomposition::dump_cells(std::ostream& out) const {
  const auto& lat = lattice();
  for (const auto& d : lat.dims()) out << d.name << ',';
  for (std::size_t v = 0; v < value_size(); ++v) out << (v ? "," : "") << "value_" << v;
  out << '\n';
  std::vector<double> cell(value_size());
  for (std::size_t id = 0; id < lat.cell_count(); ++id) {
    const auto kappa = lat.cell_coords(id);
    layout_.assemble(values_, kappa, cell);
    for (int k : kappa) out << k << ',';
    for (std::size_t v = 0; v < cell.size(); ++v) out << (v ? "," : "") << io::format_double(cell[v]);
    out << '\n';
  }
}

double order_scale(int order, double base_scale, double decay) {
  return base_scale * std::pow(decay, order);
}

double prior_log_density(const QuiltLayout& layout, std::span<const double> params,
                         double base_scale, double decay, std::span<double> grad) {
  if (!(base_scale > 0.0) || !(decay > 0.0) || decay > 1.0)
    throw std::invalid_argument("prior requires base_scale > 0 and 0 < decay <= 1");
  if (params.size() != layout.size()) throw std::invalid_argument("parameter slice size mismatch");
  double total = 0.0;
  for (const auto& c : layout.components()) {
    const double sd = order_scale(c.order(), base_scale, decay);
    const double inv_var = 1.0 / (sd * sd);
    const std::size_t n = c.rows * layout.value_size();
    const double log_norm = -std::log(sd) - 0.5 * kLogTwoPi;
    for (std::size_t i = c.offset; i < c.offset + n; ++i) {
      total += log_norm - 0.5 * params[i] * params[i] * inv_var;
      if (!grad.empty()) grad[i] -= params[i] * inv_var;
    }
  }
  return total;
}

double prior_log_density(const LatticeDecomposition& decomposition, double base_scale,
                         double decay) {
  return prior_log_density(decomposition.layout(), decomposition.values(), base_scale, decay);
}

double implied_correlation(std::span<const double> order_variances, int shared_order,
                           std::span<const double> within_order_corr) {
  const int orders = static_cast<int>(order_variances.size());
  if (orders == 0) throw std::invalid_argument("implied_correlation needs at least one order");
  if (within_order_corr.size() != order_variances.size())
    throw std::invalid_argument("one within-order correlation per order is required");
  if (shared_order < -1 || shared_order >= orders)
    throw std::invalid_argument("shared order outside [-1, max order]");
  double total = 0.0, covariance = 0.0;
  for (int o = 0; o < orders; ++o) {
    const double var = order_variances[o];
    const double rho = within_order_corr[o];
    if (!(var >= 0.0)) throw std::invalid_argument("order variances must be non-negative");
    if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("correlations must lie in [-1,1]");
    total += var;
    covariance += (o <= shared_order ? 1.0 : rho) * var;
  }
  if (!(total > 0.0)) throw std::invalid_argument("implied_correlation: zero total variance");
  return covariance / total;
}

CorrelationStructure correlation_structure(const LatticeSpec& lattice,
                                           std::span<const int> kappa1,
                                           std::span<const int> kappa2,
                                           std::span<const double> component_scales) {
  (void)lattice.cell_index(kappa1);
  (void)lattice.cell_index(kappa2);
  const int orders = lattice.max_order() + 1;
  if (static_cast<int>(component_scales.size()) != orders)
    throw std::invalid_argument("one component scale per order is required");
  std::vector<int> total(orders, 0), shared(orders, 0);
  std::vector<std::vector<int>> subsets;
  for (int order = 0; order < orders; ++order) {
    subsets.clear();
    subsets_of_size(lattice.num_dims(), order, subsets);
    for (const auto& s : subsets) {
      ++total[order];
      const bool same = std::all_of(s.begin(), s.end(), [&](int d) { return kappa1[d] == kappa2[d]; });
      if (same) ++shared[order];
    }
  }
  CorrelationStructure out;
  out.order_variances.resize(orders);
  out.within_order_corr.resize(orders);
  bool all_shared = true;
  for (int o = 0; o < orders; ++o) {
    out.order_variances[o] = total[o] * component_scales[o] * component_scales[o];
    out.within_order_corr[o] = static_cast<double>(shared[o]) / total[o];
    if (all_shared && shared[o] == total[o]) out.shared_order = o;
    else all_shared = false;
  }
  return out;
}

double horseshoe_log_density(const HorseshoeState& state) {
  if (state.coefficients.size() != state.local_scales.size())
    throw std::invalid_argument("horseshoe: one local scale per coefficient is required");
  if (!(state.global_scale > 0.0)) throw std::invalid_argument("horseshoe: global scale must be > 0");
  double total = half_cauchy_log_density(state.global_scale);
  for (std::size_t j = 0; j < state.coefficients.size(); ++j) {
    const double lambda = state.local_scales[j];
    if (!(lambda > 0.0)) throw std::invalid_argument("horseshoe: local scales must be > 0");
    total += normal_log_density(state.coefficients[j], 0.0, lambda * state.global_scale) +
             half_cauchy_log_density(lambda);
  }
  return total;
}

}  // namespace quiltsurv
