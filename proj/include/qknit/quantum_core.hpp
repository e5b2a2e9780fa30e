#pragma once

// Dense state algebra for small spin-photon registers.
//
// Layout: the first label of a register is the most significant bit of the
// flattened index, so kets read left to right exactly as written
// (|p2 p3 s> has p2 as the top bit). Photons in emission order come first and
// the spin sits last. |Z> and |up> map to bit 0, |-Z> and |down> to bit 1.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qknit/errors.hpp"

namespace qknit {

using cplx = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;
using Gate = Eigen::Matrix2cd;
using Ket2 = Eigen::Vector2cd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kImpossibleOutcome = 1e-12;
inline constexpr int kMaxQubits = 10;

// ---------------------------------------------------------------------------
// Labels and registers

enum class QubitKind : std::uint8_t { photon, spin };

struct QubitLabel {
  QubitKind kind = QubitKind::photon;
  int index = 0;  // 1-based emission order for photons, 0 for the spin

  static constexpr QubitLabel spin() { return {QubitKind::spin, 0}; }
  static constexpr QubitLabel photon(int i) { return {QubitKind::photon, i}; }

  bool is_spin() const { return kind == QubitKind::spin; }

  std::string str() const { return is_spin() ? "s" : "p" + std::to_string(index); }

  static QubitLabel parse(std::string_view text) {
    if (text == "s") return spin();
    int i = 0;
    if (text.size() >= 2 && text[0] == 'p') {
      auto [ptr, ec] = std::from_chars(text.data() + 1, text.data() + text.size(), i);
      if (ec == std::errc{} && ptr == text.data() + text.size() && i >= 0) return photon(i);
    }
    fail(errc::schema, "bad qubit label '" + std::string(text) + "'");
  }

  friend auto operator<=>(const QubitLabel&, const QubitLabel&) = default;
};

using Register = std::vector<QubitLabel>;

inline void validate_register(const Register& reg) {
  require(reg.size() <= kMaxQubits, "register too large");
  std::set<QubitLabel> seen;
  int spins = 0;
  for (const auto& q : reg) {
    require(seen.insert(q).second, "duplicate qubit label " + q.str());
    if (q.is_spin()) ++spins;
  }
  require(spins <= 1, "register holds more than one spin");
}

inline bool contains(const Register& reg, QubitLabel q) {
  return std::find(reg.begin(), reg.end(), q) != reg.end();
}

inline std::size_t position_of(const Register& reg, QubitLabel q) {
  auto it = std::find(reg.begin(), reg.end(), q);
  require(it != reg.end(), "qubit " + q.str() + " not in register");
  return static_cast<std::size_t>(it - reg.begin());
}

inline std::string to_string(const Register& reg) {
  std::string out = "[";
  for (std::size_t i = 0; i < reg.size(); ++i) out += (i ? "," : "") + reg[i].str();
  return out + "]";
}

// ---------------------------------------------------------------------------
// Polarization basis

enum class Axis : std::uint8_t { Z, X, Y };
enum class Sign : std::int8_t { minus = -1, plus = +1 };

inline char axis_char(Axis a) { return a == Axis::Z ? 'Z' : a == Axis::X ? 'X' : 'Y'; }

inline Axis parse_axis(std::string_view s) {
  if (s == "Z") return Axis::Z;
  if (s == "X") return Axis::X;
  if (s == "Y") return Axis::Y;
  fail(errc::schema, "bad basis axis '" + std::string(s) + "'");
}

inline int sign_value(Sign s) { return static_cast<int>(s); }

struct BasisVector {
  Axis axis = Axis::Z;
  Sign sign = Sign::plus;

  // |X>=(|Z>+|-Z>)/sqrt2 and |-X>=i(|Z>-|-Z>)/sqrt2; |+-Y>=(|Z>+-i|-Z>)/sqrt2.
  Ket2 ket() const {
    const double r = 1.0 / std::sqrt(2.0);
    const cplx i{0.0, 1.0};
    const bool plus = sign == Sign::plus;
    switch (axis) {
      case Axis::Z: return plus ? Ket2(1.0, 0.0) : Ket2(0.0, 1.0);
      case Axis::X: return plus ? Ket2(r, r) : Ket2(i * r, -i * r);
      case Axis::Y: return plus ? Ket2(r, i * r) : Ket2(r, -i * r);
    }
    return {};
  }

  BasisVector orthogonal() const { return {axis, sign == Sign::plus ? Sign::minus : Sign::plus}; }

  std::string str() const { return std::string(1, sign == Sign::plus ? '+' : '-') + axis_char(axis); }

  // Accepts "+X", "-Z", or a bare axis meaning the + state.
  static BasisVector parse(std::string_view s) {
    Sign sign = Sign::plus;
    if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
      sign = s[0] == '+' ? Sign::plus : Sign::minus;
      s.remove_prefix(1);
    }
    return {parse_axis(s), sign};
  }

  friend bool operator==(const BasisVector&, const BasisVector&) = default;
};

// ---------------------------------------------------------------------------
// Pauli strings

enum class Pauli : std::uint8_t { I, X, Y, Z };

inline Gate pauli_matrix(Pauli p) {
  const cplx i{0.0, 1.0};
  Gate m;
  switch (p) {
    case Pauli::I: m << 1, 0, 0, 1; break;
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, -i, i, 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline Pauli pauli_of(Axis a) { return a == Axis::Z ? Pauli::Z : a == Axis::X ? Pauli::X : Pauli::Y; }

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

struct PauliString {
  std::vector<Pauli> ops;
  int sign = +1;

  // "ZXZ", "-ZXZ", "+XIX"
  static PauliString parse(std::string_view s) {
    PauliString out;
    if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
      out.sign = s[0] == '-' ? -1 : +1;
      s.remove_prefix(1);
    }
    for (char c : s) {
      switch (c) {
        case 'I': out.ops.push_back(Pauli::I); break;
        case 'X': out.ops.push_back(Pauli::X); break;
        case 'Y': out.ops.push_back(Pauli::Y); break;
        case 'Z': out.ops.push_back(Pauli::Z); break;
        default: fail(errc::schema, "bad Pauli string '" + std::string(s) + "'");
      }
    }
    return out;
  }

  std::string str() const {
    std::string out = sign < 0 ? "-" : "";
    for (auto p : ops) out += "IXYZ"[static_cast<int>(p)];
    return out;
  }

  Matrix matrix() const {
    Matrix m = Matrix::Identity(1, 1) * static_cast<double>(sign);
    for (auto p : ops) m = kron(m, pauli_matrix(p));
    return m;
  }
};

// ---------------------------------------------------------------------------
// Bit helpers for the big-endian layout

namespace detail {

inline std::size_t shift_of(std::size_t pos, std::size_t n) { return n - 1 - pos; }

inline int bit_at(std::size_t index, std::size_t pos, std::size_t n) {
  return static_cast<int>((index >> shift_of(pos, n)) & 1u);
}

// Insert `bit` at register position `pos` of an n_full-qubit index built from
// an (n_full-1)-qubit index.
inline std::size_t insert_bit(std::size_t reduced, std::size_t pos, std::size_t n_full, int bit) {
  const std::size_t shift = shift_of(pos, n_full);
  const std::size_t low = reduced & ((std::size_t{1} << shift) - 1);
  const std::size_t high = (reduced >> shift) << (shift + 1);
  return high | (static_cast<std::size_t>(bit) << shift) | low;
}

inline std::size_t dim_of(std::size_t n) { return std::size_t{1} << n; }

// Operator removing the qubit at `pos` by contracting it with <bra|.
inline Matrix contraction(const Ket2& ket, std::size_t pos, std::size_t n) {
  const std::size_t d_out = dim_of(n - 1);
  Matrix r = Matrix::Zero(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(dim_of(n)));
  for (std::size_t i = 0; i < d_out; ++i)
    for (int a = 0; a < 2; ++a)
      r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(insert_bit(i, pos, n, a))) = std::conj(ket(a));
  return r;
}

// Full-register operator for a single-qubit gate at `pos`.
inline Matrix embed_1q(const Gate& g, std::size_t pos, std::size_t n) {
  const auto d = static_cast<Eigen::Index>(dim_of(n));
  Matrix m = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < dim_of(n - 1); ++i)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        m(static_cast<Eigen::Index>(insert_bit(i, pos, n, a)), static_cast<Eigen::Index>(insert_bit(i, pos, n, b))) =
            g(a, b);
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// States

class PureState {
 public:
  PureState(Register reg, Vector amplitudes) : reg_(std::move(reg)), amp_(std::move(amplitudes)) {
    validate_register(reg_);
    require(static_cast<std::size_t>(amp_.size()) == detail::dim_of(reg_.size()),
            "amplitude vector length does not match register " + to_string(reg_));
  }

  static PureState spin(const Ket2& ket) { return PureState({QubitLabel::spin()}, ket); }

  const Register& labels() const { return reg_; }
  const Vector& amplitudes() const { return amp_; }
  std::size_t num_qubits() const { return reg_.size(); }
  double norm_squared() const { return amp_.squaredNorm(); }

  PureState normalized() const {
    const double n = amp_.norm();
    require(n > 0.0, "cannot normalize a zero state");
    return PureState(reg_, amp_ / n);
  }

 private:
  Register reg_;
  Vector amp_;
};

class DensityMatrix {
 public:
  DensityMatrix(Register reg, Matrix m) : reg_(std::move(reg)), m_(std::move(m)) {
    validate_register(reg_);
    const auto d = static_cast<Eigen::Index>(detail::dim_of(reg_.size()));
    require(m_.rows() == d && m_.cols() == d, "matrix shape does not match register " + to_string(reg_));
  }

  explicit DensityMatrix(const PureState& psi)
      : DensityMatrix(psi.labels(), psi.amplitudes() * psi.amplitudes().adjoint()) {}

  static DensityMatrix maximally_mixed(Register reg) {
    const auto d = static_cast<Eigen::Index>(detail::dim_of(reg.size()));
    return DensityMatrix(std::move(reg), Matrix::Identity(d, d) / static_cast<double>(d));
  }

  const Register& labels() const { return reg_; }
  const Matrix& matrix() const { return m_; }
  std::size_t num_qubits() const { return reg_.size(); }
  Eigen::Index dim() const { return m_.rows(); }
  double trace() const { return m_.trace().real(); }

  DensityMatrix normalized() const {
    const double t = trace();
    require(t > 0.0, "cannot normalize a density matrix with non-positive trace");
    return DensityMatrix(reg_, m_ / t);
  }

  double hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part());
    return es.eigenvalues().minCoeff();
  }

  Matrix hermitian_part() const { return 0.5 * (m_ + m_.adjoint()); }

 private:
  Register reg_;
  Matrix m_;
};

// ---------------------------------------------------------------------------
// Gates

// Larmor precession by `theta` about the field axis:
// U = cos(theta/2) 1 + i sin(theta/2) sigma_x.
inline Gate precession_gate(double theta) {
  require(std::isfinite(theta), "precession angle must be finite");
  const cplx c{std::cos(theta / 2), 0.0};
  const cplx s{0.0, std::sin(theta / 2)};
  Gate u;
  u << c, s, s, c;
  return u;
}

inline PureState apply_gate(const PureState& psi, QubitLabel target, const Gate& g) {
  const auto pos = position_of(psi.labels(), target);
  return PureState(psi.labels(), detail::embed_1q(g, pos, psi.num_qubits()) * psi.amplitudes());
}

inline DensityMatrix apply_gate(const DensityMatrix& rho, QubitLabel target, const Gate& g) {
  const auto pos = position_of(rho.labels(), target);
  const Matrix u = detail::embed_1q(g, pos, rho.num_qubits());
  return DensityMatrix(rho.labels(), u * rho.matrix() * u.adjoint());
}

// Maps a spin amplitude pair onto (photon, spin) amplitudes; row = 2*photon_bit + spin_bit.
using EmissionMap = Eigen::Matrix<cplx, 4, 2>;

// a|up> + b|down>  ->  a|up>|-Z> + b|down>|Z>
inline EmissionMap cnot_emission_map() {
  EmissionMap m = EmissionMap::Zero();
  m(2 * 1 + 0, 0) = 1.0;
  m(2 * 0 + 1, 1) = 1.0;
  return m;
}

namespace detail {

struct EmissionLayout {
  Register out_labels;
  std::size_t spin_pos;  // spin position in the input register
};

inline EmissionLayout emission_layout(const Register& reg, QubitLabel spin, int new_photon_index) {
  require(spin.is_spin(), "emission must be driven by the spin label");
  const auto pos = position_of(reg, spin);
  const auto photon = QubitLabel::photon(new_photon_index);
  require(new_photon_index >= 0, "photon index must be non-negative");
  require(!contains(reg, photon), "photon index " + std::to_string(new_photon_index) + " already used");
  Register out = reg;
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), photon);
  return {std::move(out), pos};
}

// Full-register operator: the new photon lands just before the spin.
inline Matrix emission_operator(const EmissionMap& map, std::size_t spin_pos, std::size_t n_in) {
  const std::size_t n_out = n_in + 1;
  Matrix e = Matrix::Zero(static_cast<Eigen::Index>(dim_of(n_out)), static_cast<Eigen::Index>(dim_of(n_in)));
  for (std::size_t rest = 0; rest < dim_of(n_in - 1); ++rest) {
    for (int s_in = 0; s_in < 2; ++s_in) {
      const std::size_t col = insert_bit(rest, spin_pos, n_in, s_in);
      for (int ph = 0; ph < 2; ++ph) {
        for (int s_out = 0; s_out < 2; ++s_out) {
          const std::size_t row = insert_bit(insert_bit(rest, spin_pos, n_out - 1, s_out), spin_pos, n_out, ph);
          e(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = map(2 * ph + s_out, s_in);
        }
      }
    }
  }
  return e;
}

}  // namespace detail

inline PureState apply_emission(const PureState& psi, QubitLabel spin, int new_photon_index, const EmissionMap& map) {
  auto layout = detail::emission_layout(psi.labels(), spin, new_photon_index);
  const Matrix e = detail::emission_operator(map, layout.spin_pos, psi.num_qubits());
  return PureState(std::move(layout.out_labels), e * psi.amplitudes());
}

inline DensityMatrix apply_emission(const DensityMatrix& rho, QubitLabel spin, int new_photon_index,
                                    const EmissionMap& map) {
  auto layout = detail::emission_layout(rho.labels(), spin, new_photon_index);
  const Matrix e = detail::emission_operator(map, layout.spin_pos, rho.num_qubits());
  return DensityMatrix(std::move(layout.out_labels), e * rho.matrix() * e.adjoint());
}

inline PureState cnot_emit(const PureState& psi, QubitLabel spin, int new_photon_index) {
  return apply_emission(psi, spin, new_photon_index, cnot_emission_map());
}

// ---------------------------------------------------------------------------
// Projection and partial trace

template <class State>
struct Projection {
  double probability;
  State state;
};

inline Projection<PureState> project(const PureState& psi, QubitLabel qubit, BasisVector onto) {
  const auto pos = position_of(psi.labels(), qubit);
  require(psi.num_qubits() > 1, "cannot project the last qubit of a register");
  Register out = psi.labels();
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(pos));
  const Vector v = detail::contraction(onto.ket(), pos, psi.num_qubits()) * psi.amplitudes();
  const double p = v.squaredNorm() / psi.norm_squared();
  if (p < kImpossibleOutcome)
    fail(errc::impossible_outcome, "projecting " + qubit.str() + " onto " + onto.str() + " has zero probability");
  return {p, PureState(std::move(out), v / v.norm())};
}

inline Projection<DensityMatrix> project(const DensityMatrix& rho, QubitLabel qubit, BasisVector onto) {
  const auto pos = position_of(rho.labels(), qubit);
  require(rho.num_qubits() > 1, "cannot project the last qubit of a register");
  Register out = rho.labels();
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(pos));
  const Matrix r = detail::contraction(onto.ket(), pos, rho.num_qubits());
  Matrix m = r * rho.matrix() * r.adjoint();
  const double p = m.trace().real() / rho.trace();
  if (p < kImpossibleOutcome)
    fail(errc::impossible_outcome, "projecting " + qubit.str() + " onto " + onto.str() + " has zero probability");
  m /= m.trace().real();
  return {p, DensityMatrix(std::move(out), std::move(m))};
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::set<QubitLabel>& keep) {
  require(!keep.empty(), "partial trace must keep at least one qubit");
  for (const auto& q : keep) require(contains(rho.labels(), q), "kept qubit " + q.str() + " not in register");

  const std::size_t n = rho.num_qubits();
  std::vector<std::size_t> kept, traced;
  Register out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep.count(rho.labels()[i])) {
      kept.push_back(i);
      out.push_back(rho.labels()[i]);
    } else {
      traced.push_back(i);
    }
  }
  if (traced.empty()) return rho;

  auto compose = [&](std::size_t k_bits, std::size_t t_bits) {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < kept.size(); ++j)
      idx |= static_cast<std::size_t>(detail::bit_at(k_bits, j, kept.size())) << detail::shift_of(kept[j], n);
    for (std::size_t j = 0; j < traced.size(); ++j)
      idx |= static_cast<std::size_t>(detail::bit_at(t_bits, j, traced.size())) << detail::shift_of(traced[j], n);
    return static_cast<Eigen::Index>(idx);
  };

  const std::size_t dk = detail::dim_of(kept.size());
  const std::size_t dt = detail::dim_of(traced.size());
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(dk), static_cast<Eigen::Index>(dk));
  for (std::size_t r = 0; r < dk; ++r)
    for (std::size_t c = 0; c < dk; ++c)
      for (std::size_t t = 0; t < dt; ++t)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += rho.matrix()(compose(r, t), compose(c, t));
  return DensityMatrix(std::move(out), std::move(m));
}

inline DensityMatrix trace_out(const DensityMatrix& rho, QubitLabel q) {
  std::set<QubitLabel> keep(rho.labels().begin(), rho.labels().end());
  keep.erase(q);
  return partial_trace(rho, keep);
}

// ---------------------------------------------------------------------------
// Metrics

namespace detail {

// Eigenvalues below this fraction of the largest are rounding noise; their
// square roots would otherwise leak ~1e-8 into fidelities of low-rank states.
inline constexpr double kEigenFloor = 1e-13;

inline Eigen::VectorXd floored_sqrt(const Eigen::VectorXd& ev) {
  const double cut = kEigenFloor * std::max(ev.maxCoeff(), 0.0);
  return ev.unaryExpr([cut](double x) { return x > cut ? std::sqrt(x) : 0.0; });
}

inline Matrix psd_sqrt(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.adjoint()));
  const Eigen::VectorXd ev = floored_sqrt(es.eigenvalues());
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2. Negative eigenvalues
// of either argument are clipped before the square roots.
inline double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  require(rho.dim() == sigma.dim(), "fidelity: dimension mismatch");
  const Matrix sr = detail::psd_sqrt(rho.matrix());
  const Matrix inner = sr * sigma.matrix() * sr;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  const double root = detail::floored_sqrt(es.eigenvalues()).sum();
  return std::clamp(root * root, 0.0, 1.0);
}

inline double fidelity(const DensityMatrix& rho, const PureState& psi) {
  require(rho.dim() == psi.amplitudes().size(), "fidelity: dimension mismatch");
  const Vector v = psi.amplitudes() / psi.amplitudes().norm();
  return std::clamp((v.adjoint() * rho.matrix() * v)(0, 0).real(), 0.0, 1.0);
}

inline double fidelity(const PureState& a, const PureState& b) {
  require(a.amplitudes().size() == b.amplitudes().size(), "fidelity: dimension mismatch");
  const cplx ov = a.amplitudes().dot(b.amplitudes());
  return std::norm(ov) / (a.norm_squared() * b.norm_squared());
}

inline double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  require(rho.dim() == sigma.dim(), "trace distance: dimension mismatch");
  const Matrix d = rho.matrix() - sigma.matrix();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (d + d.adjoint()), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline DensityMatrix partial_transpose(const DensityMatrix& rho, const std::set<QubitLabel>& part) {
  const std::size_t n = rho.num_qubits();
  std::size_t mask = 0;
  for (const auto& q : part) mask |= std::size_t{1} << detail::shift_of(position_of(rho.labels(), q), n);
  const Eigen::Index d = rho.dim();
  Matrix out(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      const std::size_t si = (ui & ~mask) | (uj & mask);
      const std::size_t sj = (uj & ~mask) | (ui & mask);
      out(i, j) = rho.matrix()(static_cast<Eigen::Index>(si), static_cast<Eigen::Index>(sj));
    }
  }
  return DensityMatrix(rho.labels(), std::move(out));
}

// Sum of |negative eigenvalues| of the partial transpose over `part`.
inline double negativity(const DensityMatrix& rho, const std::set<QubitLabel>& part) {
  require(!part.empty() && part.size() < rho.num_qubits(), "negativity needs a non-trivial bipartition");
  const DensityMatrix pt = partial_transpose(rho, part);
  Eigen::SelfAdjointEigenSolver<Matrix> es(pt.hermitian_part(), Eigen::EigenvaluesOnly);
  double neg = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) < 0.0) neg -= es.eigenvalues()(i);
  return neg;
}

// Negativity of a two-qubit matrix across its natural cut.
inline double negativity(const DensityMatrix& rho) {
  require(rho.num_qubits() == 2, "two-qubit negativity needs a two-qubit register");
  return negativity(rho, {rho.labels().front()});
}

// Degree of polarization (c+ - c-)/(c+ + c-). Counts may be rates or populations.
inline double dop_single(double c_plus, double c_minus) {
  require(c_plus >= 0 && c_minus >= 0, "counts must be non-negative");
  const double total = c_plus + c_minus;
  if (!(total > 0)) fail(errc::insufficient_data, "degree of polarization needs non-zero counts");
  return (c_plus - c_minus) / total;
}

// Two-photon rectilinear correlation; xx = |X,X>, xX = |X,-X>, Xx = |-X,X>, XX = |-X,-X>.
inline double dop_pair(double c_xx, double c_xX, double c_Xx, double c_XX) {
  require(c_xx >= 0 && c_xX >= 0 && c_Xx >= 0 && c_XX >= 0, "counts must be non-negative");
  const double total = c_xx + c_xX + c_Xx + c_XX;
  if (!(total > 0)) fail(errc::insufficient_data, "degree of polarization needs non-zero counts");
  return (c_xx - c_xX - c_Xx + c_XX) / total;
}

inline double population(const DensityMatrix& rho, const std::vector<BasisVector>& outcome) {
  require(outcome.size() == rho.num_qubits(), "population: outcome length mismatch");
  Vector v = Vector::Ones(1);
  for (const auto& b : outcome) v = kron(v, b.ket());
  return (v.adjoint() * rho.matrix() * v)(0, 0).real();
}

// Rectilinear-basis DOP of a one-photon matrix.
inline double rectilinear_dop(const DensityMatrix& rho) {
  require(rho.num_qubits() == 1, "single-photon DOP needs one qubit");
  return dop_single(population(rho, {{Axis::X, Sign::plus}}), population(rho, {{Axis::X, Sign::minus}}));
}

// Rectilinear two-photon correlation of a two-photon matrix.
inline double rectilinear_pair_dop(const DensityMatrix& rho) {
  require(rho.num_qubits() == 2, "two-photon DOP needs two qubits");
  const BasisVector x{Axis::X, Sign::plus}, xm{Axis::X, Sign::minus};
  return dop_pair(population(rho, {x, x}), population(rho, {x, xm}), population(rho, {xm, x}),
                  population(rho, {xm, xm}));
}

inline double stabilizer_expectation(const DensityMatrix& rho, const PauliString& op) {
  require(op.ops.size() == rho.num_qubits(), "Pauli string length does not match register");
  return (rho.matrix() * op.matrix()).trace().real();
}

}  // namespace qknit
