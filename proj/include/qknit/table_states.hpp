#pragma once

// Reference states of the knitting protocol (rows 1..14 of the ideal-state
// table), written out term by term in the fixed basis convention.

#include <variant>

#include "qknit/quantum_core.hpp"

namespace qknit {

using TableState = std::variant<PureState, DensityMatrix>;

namespace detail {

inline Vector ket_of(std::initializer_list<BasisVector> photons) {
  Vector v = Vector::Ones(1);
  for (const auto& b : photons) v = kron(v, b.ket());
  return v;
}

inline Vector with_spin(const Vector& photons, int spin_bit) {
  return kron(photons, spin_bit == 0 ? Ket2(1.0, 0.0) : Ket2(0.0, 1.0));
}

inline Matrix mixture(std::initializer_list<Vector> kets) {
  const auto d = kets.begin()->size();
  Matrix m = Matrix::Zero(d, d);
  for (const auto& k : kets) m += k * k.adjoint();
  return m / static_cast<double>(kets.size());
}

}  // namespace detail

// Exact state of the given row. Row 11 is given in the form the gate sequence
// actually produces; the printed up-spin branch pairs the rectilinear states
// the wrong way round (see tests/test_table_states.cpp).
inline TableState table_state(int row) {
  using detail::ket_of;
  using detail::mixture;
  using detail::with_spin;
  const BasisVector Zp{Axis::Z, Sign::plus}, Zm{Axis::Z, Sign::minus};
  const BasisVector Xp{Axis::X, Sign::plus}, Xm{Axis::X, Sign::minus};
  const cplx i{0.0, 1.0};
  const double r2 = 1.0 / std::sqrt(2.0);
  const auto p = [](int k) { return QubitLabel::photon(k); };
  const auto s = QubitLabel::spin();

  switch (row) {
    case 1:
      return DensityMatrix({p(1)}, mixture({ket_of({Zp}), ket_of({Zm})}));
    case 2:
      return DensityMatrix({p(1), p(2)}, mixture({ket_of({Zp, Zp}), ket_of({Zp, Zm}), ket_of({Zm, Zp}),
                                                  ket_of({Zm, Zm})}));
    case 3:
      return PureState({p(2), p(3), s},
                       r2 * (with_spin(ket_of({Xm, Zm}), 0) + with_spin(ket_of({Xp, Zp}), 1)));
    case 4:
      return DensityMatrix({p(2), p(3)}, mixture({ket_of({Xm, Zm}), ket_of({Xp, Zp})}));
    case 5:
      return DensityMatrix({p(1), p(2)}, mixture({ket_of({Zp, Xm}), ket_of({Zm, Xp})}));
    case 6:
      return PureState({p(2)}, ket_of({Xp}));
    case 7: {
      const Vector a = ket_of({Xm, Zm}), b = ket_of({Xp, Zp});
      return PureState({p(2), p(3), p(4), s}, 0.5 * (with_spin(kron(i * a - b, Zm.ket()), 0) +
                                                     with_spin(kron(-a + i * b, Zp.ket()), 1)));
    }
    case 8:
      return PureState({p(2), p(3)}, r2 * (-ket_of({Xm, Zm}) + i * ket_of({Xp, Zp})));
    case 9:
      return PureState({p(3), s}, with_spin(ket_of({Zp}), 1));
    case 10:
      return DensityMatrix({p(3)}, mixture({ket_of({Zp}), ket_of({Zm})}));
    case 11: {
      const Vector up = -(ket_of({Xp, Xp, Zm}) + ket_of({Xm, Xm, Zm}));
      const Vector dn = ket_of({Xp, Xm, Zp}) - ket_of({Xm, Xp, Zp});
      return PureState({p(2), p(4), p(5), s}, 0.5 * (with_spin(up, 0) + with_spin(dn, 1)));
    }
    case 12:
      return PureState({p(2), p(4)}, r2 * (ket_of({Xp, Xm}) - ket_of({Xm, Xp})));
    case 13: {
      const Vector up = -(ket_of({Xp, Zp, Xp, Zm}) + ket_of({Xm, Zm, Xm, Zm}));
      const Vector dn = ket_of({Xp, Zp, Xm, Zp}) - ket_of({Xm, Zm, Xp, Zp});
      return PureState({p(2), p(3), p(4), p(5), s}, 0.5 * (with_spin(up, 0) + with_spin(dn, 1)));
    }
    case 14:
      return DensityMatrix({p(2), p(4)}, mixture({ket_of({Xp, Xm}), ket_of({Xm, Xp})}));
    default:
      fail(errc::invalid_argument, "table row must be in 1..14, got " + std::to_string(row));
  }
}

inline DensityMatrix as_density(const TableState& st) {
  if (const auto* psi = std::get_if<PureState>(&st)) return DensityMatrix(*psi);
  return std::get<DensityMatrix>(st);
}

inline DensityMatrix table_density(int row) { return as_density(table_state(row)); }

}  // namespace qknit
