"""Stabilizer-formalism engine.

Uniform Clifford sampling, tableau-to-gate synthesis, compressed snapshot
states U^dag |b>, and phase-exact stabilizer inner products.

Conventions
-----------
Pauli operators are stored as integer bitmasks (x, z, v) meaning
i^v * X^x Z^z with bit j of a mask addressing qubit j; v is mod 4 and has the
parity of popcount(x & z) for Hermitian operators.  A Clifford tableau holds
the conjugation images of X_j and Z_j as rows (x, z, s) where the sign bit s
means (-1)^s times the letterwise Pauli (each x=z=1 site read as Y).

A StabilizerState carries eta commuting generators plus a global-phase
anchor: one basis state whose exact amplitude 2^(-h/2) * exp(i*pi*m/4) is
tracked through every gate.  The magnitude-only inner product of the classic
tableau algorithm is extended to full complex values this way; phases can be
any eighth root of unity even though magnitudes are always 2^(-k/2).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import InternalInvariantError
from .paulis import PauliString
from .rng import as_generator

_CIS8 = None


def _cis(oct_: int) -> complex:
    """exp(i*pi*oct/4) from a fixed table."""
    global _CIS8
    if _CIS8 is None:
        import math

        r = math.sqrt(0.5)
        _CIS8 = (
            1 + 0j,
            complex(r, r),
            1j,
            complex(-r, r),
            -1 + 0j,
            complex(-r, -r),
            -1j,
            complex(r, -r),
        )
    return _CIS8[oct_ % 8]


def _mul(x1, z1, v1, x2, z2, v2):
    """Product of i^v1 X^x1 Z^z1 and i^v2 X^x2 Z^z2 in the same form."""
    return x1 ^ x2, z1 ^ z2, (v1 + v2 + 2 * (z1 & x2).bit_count()) % 4


def _sp(x1, z1, x2, z2) -> int:
    """Symplectic product: 1 when the two Paulis anticommute."""
    return ((x1 & z2).bit_count() + (z1 & x2).bit_count()) & 1


def _letter_v(x: int, z: int, sign: int) -> int:
    return ((x & z).bit_count() + 2 * sign) % 4


def _v_to_sign(x: int, z: int, v: int) -> int:
    delta = (v - (x & z).bit_count()) % 4
    if delta == 0:
        return 0
    if delta == 2:
        return 1
    raise InternalInvariantError("non-Hermitian phase where a sign bit was expected")


# ---------------------------------------------------------------------------
# row-wise gate conjugation (shared by tableaux and states)


def _rows_h(xs, zs, vs, t):
    bt = 1 << t
    for i in range(len(xs)):
        xb = xs[i] & bt
        zb = zs[i] & bt
        if xb and zb:
            vs[i] = (vs[i] + 2) % 4
        if bool(xb) != bool(zb):
            xs[i] ^= bt
            zs[i] ^= bt


def _rows_s(xs, zs, vs, t, dag=False):
    bt = 1 << t
    step = 3 if dag else 1
    for i in range(len(xs)):
        if xs[i] & bt:
            zs[i] ^= bt
            vs[i] = (vs[i] + step) % 4


def _rows_x(xs, zs, vs, t):
    bt = 1 << t
    for i in range(len(xs)):
        if zs[i] & bt:
            vs[i] = (vs[i] + 2) % 4


def _rows_z(xs, zs, vs, t):
    bt = 1 << t
    for i in range(len(xs)):
        if xs[i] & bt:
            vs[i] = (vs[i] + 2) % 4


def _rows_cx(xs, zs, vs, c, t):
    bc, bt = 1 << c, 1 << t
    for i in range(len(xs)):
        if xs[i] & bc:
            xs[i] ^= bt
        if zs[i] & bt:
            zs[i] ^= bc


def _rows_cz(xs, zs, vs, a, b):
    ba, bb = 1 << a, 1 << b
    for i in range(len(xs)):
        xa = xs[i] & ba
        xb = xs[i] & bb
        if xa:
            zs[i] ^= bb
        if xb:
            zs[i] ^= ba
        if xa and xb:
            vs[i] = (vs[i] + 2) % 4


def _rows_apply(xs, zs, vs, gate):
    name = gate[0]
    if name == "H":
        _rows_h(xs, zs, vs, gate[1])
    elif name == "S":
        _rows_s(xs, zs, vs, gate[1])
    elif name == "SDG":
        _rows_s(xs, zs, vs, gate[1], dag=True)
    elif name == "X":
        _rows_x(xs, zs, vs, gate[1])
    elif name == "Z":
        _rows_z(xs, zs, vs, gate[1])
    elif name == "CX":
        _rows_cx(xs, zs, vs, gate[1], gate[2])
    elif name == "CZ":
        _rows_cz(xs, zs, vs, gate[1], gate[2])
    else:
        raise ValueError(f"unknown gate {name!r}")


def _conj_pauli(x, z, v, gate):
    xs, zs, vs = [x], [z], [v]
    _rows_apply(xs, zs, vs, gate)
    return xs[0], zs[0], vs[0]


# ---------------------------------------------------------------------------
# Clifford tableaux


@dataclass(frozen=True)
class CliffordTableau:
    """Symplectic images of X_j (rows 0..eta-1) and Z_j (rows eta..2eta-1)."""

    eta: int
    rows: tuple[tuple[int, int, int], ...]  # (x, z, sign)

    def __post_init__(self):
        if len(self.rows) != 2 * self.eta:
            raise ValueError("tableau must have 2*eta rows")

    def is_symplectic(self) -> bool:
        e = self.eta
        for i in range(2 * e):
            xi, zi, _ = self.rows[i]
            for j in range(i + 1, 2 * e):
                xj, zj, _ = self.rows[j]
                want = 1 if j == i + e else 0
                if _sp(xi, zi, xj, zj) != want:
                    return False
        return True

    def key(self):
        return (self.eta, self.rows)

    @staticmethod
    def identity(eta: int) -> "CliffordTableau":
        rows = [(1 << j, 0, 0) for j in range(eta)]
        rows += [(0, 1 << j, 0) for j in range(eta)]
        return CliffordTableau(eta, tuple(rows))


def sample_uniform_clifford(eta: int, seed) -> CliffordTableau:
    """Sample a tableau uniformly over the Clifford group modulo global phase.

    Symplectic Gram-Schmidt: the image pair of (X_j, Z_j) is drawn uniformly
    from the symplectic complement of the pairs already fixed, which walks the
    group-order recursion exactly; sign bits are then uniform.
    """
    if eta < 1:
        raise ValueError("eta must be positive")
    rng = as_generator(seed)
    basis = [(1 << j, 0) for j in range(eta)] + [(0, 1 << j) for j in range(eta)]
    ximg = []
    zimg = []
    for _ in range(eta):
        m = len(basis)
        while True:
            bits = rng.integers(0, 2, size=m)
            if bits.any():
                break
        fx = fz = 0
        for i in range(m):
            if bits[i]:
                fx ^= basis[i][0]
                fz ^= basis[i][1]
        widx = next(i for i, (bx, bz) in enumerate(basis) if _sp(fx, fz, bx, bz))
        wx, wz = basis[widx]
        rest = []
        for i, (bx, bz) in enumerate(basis):
            if i == widx:
                continue
            if _sp(fx, fz, bx, bz):
                rest.append((bx ^ wx, bz ^ wz))
            else:
                rest.append((bx, bz))
        bits2 = rng.integers(0, 2, size=m - 1)
        gx, gz = wx, wz
        for i in range(m - 1):
            if bits2[i]:
                gx ^= rest[i][0]
                gz ^= rest[i][1]
        ximg.append((fx, fz))
        zimg.append((gx, gz))
        cidx = next(i for i, (cx, cz) in enumerate(rest) if _sp(gx, gz, cx, cz))
        cx0, cz0 = rest[cidx]
        basis = []
        for i, (cx, cz) in enumerate(rest):
            if i == cidx:
                continue
            if _sp(gx, gz, cx, cz):
                basis.append((cx ^ cx0, cz ^ cz0))
            else:
                basis.append((cx, cz))
    signs = rng.integers(0, 2, size=2 * eta)
    rows = [(x, z, int(signs[j])) for j, (x, z) in enumerate(ximg)]
    rows += [(x, z, int(signs[eta + j])) for j, (x, z) in enumerate(zimg)]
    return CliffordTableau(eta, tuple(rows))


def _invert_gates(gates) -> list:
    """Application-order gate list for the inverse circuit, over {H, S, CX}."""
    out = []
    for gate in reversed(gates):
        name = gate[0]
        if name == "H":
            out.append(gate)
        elif name == "CX":
            out.append(gate)
        elif name == "S":
            out += [gate] * 3
        elif name == "Z":
            out += [("S", gate[1])] * 2
        elif name == "X":
            t = gate[1]
            out += [("H", t), ("S", t), ("S", t), ("H", t)]
        elif name == "CZ":
            a, b = gate[1], gate[2]
            out += [("H", b), ("CX", a, b), ("H", b)]
        else:
            raise ValueError(f"cannot invert gate {name!r}")
    return out


def tableau_to_gates(tab: CliffordTableau) -> list:
    """Synthesize a {H, S, CX} circuit realizing the tableau (global phase free).

    Reduces the tableau to the identity with recorded conjugations, one qubit
    at a time; the emitted circuit is the reversed inverse of that record.
    Results are memoized since shadow evaluation revisits each tableau.
    """
    return list(_tableau_gates_cached(tab))


@functools.lru_cache(maxsize=16384)
def _tableau_gates_cached(tab: CliffordTableau) -> tuple:
    if not tab.is_symplectic():
        raise ValueError("tableau is not symplectic")
    eta = tab.eta
    xs = [r[0] for r in tab.rows]
    zs = [r[1] for r in tab.rows]
    vs = [_letter_v(*r) for r in tab.rows]
    rec = []

    def emit(*gate):
        rec.append(gate)
        _rows_apply(xs, zs, vs, gate)

    def bits_of(mask):
        out = []
        while mask:
            b = (mask & -mask).bit_length() - 1
            out.append(b)
            mask &= mask - 1
        return out

    for j in range(eta):
        # pivot: make the X-image row carry an X on qubit j
        if not xs[j] >> j & 1:
            xb = [c for c in bits_of(xs[j]) if c >= j]
            if xb:
                c = xb[0]
            else:
                c = next(c for c in bits_of(zs[j]) if c >= j)
                emit("H", c)
            if c != j:
                emit("CX", j, c)
                emit("CX", c, j)
                emit("CX", j, c)
        for c in bits_of(xs[j]):
            if c != j:
                emit("CX", j, c)
        if zs[j] >> j & 1:
            emit("S", j)
        for c in bits_of(zs[j]):
            if c != j:
                emit("CZ", j, c)
        # X-image is now +-X_j; fix the Z-image inside an H(j) sandwich
        if not (xs[eta + j] == 0 and zs[eta + j] == 1 << j):
            emit("H", j)
            for c in bits_of(xs[eta + j]):
                if c != j:
                    emit("CX", j, c)
            if zs[eta + j] >> j & 1:
                emit("S", j)
            for c in bits_of(zs[eta + j]):
                if c != j:
                    emit("CZ", j, c)
            emit("H", j)
        if vs[j] == 2:
            emit("Z", j)
        if vs[eta + j] == 2:
            emit("X", j)
        if xs[j] != 1 << j or zs[j] != 0 or vs[j] != 0:
            raise InternalInvariantError("tableau synthesis failed on an X row")
        if xs[eta + j] != 0 or zs[eta + j] != 1 << j or vs[eta + j] != 0:
            raise InternalInvariantError("tableau synthesis failed on a Z row")
    return tuple(_invert_gates(rec))


# ---------------------------------------------------------------------------
# stabilizer states with exact global phase


class StabilizerState:
    """Stabilizer state: eta generators plus a phase-exact basis anchor."""

    __slots__ = ("eta", "xs", "zs", "vs", "anchor", "amp_half", "amp_oct", "_pivots")

    def __init__(self, eta, xs, zs, vs, anchor, amp_half, amp_oct):
        self.eta = eta
        self.xs = xs
        self.zs = zs
        self.vs = vs
        self.anchor = anchor
        self.amp_half = amp_half
        self.amp_oct = amp_oct % 8
        self._pivots = None

    # -- constructors

    @staticmethod
    def from_bits(bits) -> "StabilizerState":
        """Computational basis state |b>; bits may be "0101" or a sequence."""
        blist = [int(b) for b in bits]
        eta = len(blist)
        xs = [0] * eta
        zs = [1 << j for j in range(eta)]
        vs = [2 * blist[j] % 4 for j in range(eta)]
        anchor = 0
        for j, b in enumerate(blist):
            anchor |= b << j
        return StabilizerState(eta, xs, zs, vs, anchor, 0, 0)

    @staticmethod
    def entangled_pairs(n: int) -> "StabilizerState":
        """The 2n-qubit state d^{-1/2} sum_i |i>_S |i>_A (S = qubits 0..n-1)."""
        eta = 2 * n
        xs, zs, vs = [], [], []
        for j in range(n):
            xs.append((1 << j) | (1 << (n + j)))
            zs.append(0)
            vs.append(0)
        for j in range(n):
            xs.append(0)
            zs.append((1 << j) | (1 << (n + j)))
            vs.append(0)
        return StabilizerState(eta, xs, zs, vs, 0, n, 0)

    def copy(self) -> "StabilizerState":
        return StabilizerState(
            self.eta, list(self.xs), list(self.zs), list(self.vs),
            self.anchor, self.amp_half, self.amp_oct,
        )

    def append_qubit(self, bit: int) -> "StabilizerState":
        """Return the state with one extra qubit in |bit> appended at the end."""
        eta = self.eta + 1
        xs = list(self.xs) + [0]
        zs = list(self.zs) + [1 << self.eta]
        vs = list(self.vs) + [2 * int(bit) % 4]
        anchor = self.anchor | (int(bit) << self.eta)
        return StabilizerState(eta, xs, zs, vs, anchor, self.amp_half, self.amp_oct)

    # -- internals

    def _x_pivots(self):
        """Echelonized generator set keyed by X-part pivot bits (cached)."""
        if self._pivots is not None:
            return self._pivots
        pivots = []  # (pivot bit, x, z, v), pivot bits mutually reduced
        for i in range(self.eta):
            x, z, v = self.xs[i], self.zs[i], self.vs[i]
            for pb, px, pz, pv in pivots:
                if x >> pb & 1:
                    x, z, v = _mul(x, z, v, px, pz, pv)
            if x:
                pb = (x & -x).bit_length() - 1
                reduced = []
                for qb, qx, qz, qv in pivots:
                    if qx >> pb & 1:
                        qx, qz, qv = _mul(qx, qz, qv, x, z, v)
                    reduced.append((qb, qx, qz, qv))
                reduced.append((pb, x, z, v))
                pivots = reduced
        self._pivots = pivots
        return pivots

    def _solve_x(self, target: int):
        """Stabilizer-group element with X-part equal to target, or None."""
        tx, ax, az, av = target, 0, 0, 0
        for pb, px, pz, pv in self._x_pivots():
            if tx >> pb & 1:
                tx ^= px
                ax, az, av = _mul(ax, az, av, px, pz, pv)
        if tx:
            return None
        return ax, az, av

    def _rel_oct(self, y: int):
        """Octant of psi(y)/psi(anchor), or None when psi(y) = 0."""
        sol = self._solve_x(y ^ self.anchor)
        if sol is None:
            return None
        ax, az, av = sol
        return (2 * av + 4 * ((az & self.anchor).bit_count() & 1)) % 8

    def amplitude_at(self, y: int) -> complex:
        """Exact amplitude <y|psi> for a basis-state bitmask y."""
        rel = self._rel_oct(y)
        if rel is None:
            return 0j
        return 2.0 ** (-self.amp_half / 2.0) * _cis(self.amp_oct + rel)

    # -- gate application (state evolution, anchor kept exact)

    def _h(self, t):
        bt = 1 << t
        partner = self._rel_oct(self.anchor ^ bt)
        _rows_h(self.xs, self.zs, self.vs, t)
        self._pivots = None
        bit = 1 if self.anchor & bt else 0
        y0 = self.anchor & ~bt
        if partner is None:
            # only one branch populated: psi'(y0) = psi(anchor)/sqrt(2)
            self.anchor = y0
            self.amp_half += 1
            return
        if bit == 0:
            m1, m2 = 0, partner
        else:
            m1, m2 = partner, 0
        res = _add_octants(m1, m2)
        if res is not None:
            s, m = res
            self.anchor = y0
        else:
            s, m = _add_octants(m1, (m2 + 4) % 8)
            self.anchor = y0 | bt
        self.amp_half += 1 - s
        self.amp_oct = (self.amp_oct + m) % 8

    def _s(self, t, dag=False):
        _rows_s(self.xs, self.zs, self.vs, t, dag=dag)
        self._pivots = None
        if self.anchor >> t & 1:
            self.amp_oct = (self.amp_oct + (6 if dag else 2)) % 8

    def _x(self, t):
        _rows_x(self.xs, self.zs, self.vs, t)
        self._pivots = None
        self.anchor ^= 1 << t

    def _z(self, t):
        _rows_z(self.xs, self.zs, self.vs, t)
        self._pivots = None
        if self.anchor >> t & 1:
            self.amp_oct = (self.amp_oct + 4) % 8

    def _cx(self, c, t):
        _rows_cx(self.xs, self.zs, self.vs, c, t)
        self._pivots = None
        if self.anchor >> c & 1:
            self.anchor ^= 1 << t

    def _cz(self, a, b):
        _rows_cz(self.xs, self.zs, self.vs, a, b)
        self._pivots = None
        if (self.anchor >> a & 1) and (self.anchor >> b & 1):
            self.amp_oct = (self.amp_oct + 4) % 8

    def apply_gate(self, gate):
        name = gate[0]
        if name == "H":
            self._h(gate[1])
        elif name == "S":
            self._s(gate[1])
        elif name == "SDG":
            self._s(gate[1], dag=True)
        elif name == "X":
            self._x(gate[1])
        elif name == "Z":
            self._z(gate[1])
        elif name == "CX":
            self._cx(gate[1], gate[2])
        elif name == "CZ":
            self._cz(gate[1], gate[2])
        else:
            raise ValueError(f"unknown gate {name!r}")

    def apply_gates(self, gates):
        for g in gates:
            self.apply_gate(g)

    def apply_pauli(self, x: int, z: int, v: int):
        """Left-multiply the state by i^v X^x Z^z (must be Hermitian form)."""
        self._pivots = None
        for i in range(self.eta):
            if _sp(x, z, self.xs[i], self.zs[i]):
                self.vs[i] = (self.vs[i] + 2) % 4
        self.amp_oct = (self.amp_oct + 2 * v + 4 * ((z & self.anchor).bit_count() & 1)) % 8
        self.anchor ^= x

    # -- canonical form

    def canonicalize(self):
        """Unique row-reduced generator set (X block then Z block pivots)."""
        self._pivots = None
        xs, zs, vs = self.xs, self.zs, self.vs
        eta = self.eta
        r = 0
        for j in range(eta):
            piv = next((i for i in range(r, eta) if xs[i] >> j & 1), None)
            if piv is None:
                continue
            xs[r], xs[piv] = xs[piv], xs[r]
            zs[r], zs[piv] = zs[piv], zs[r]
            vs[r], vs[piv] = vs[piv], vs[r]
            for i in range(eta):
                if i != r and xs[i] >> j & 1:
                    xs[i], zs[i], vs[i] = _mul(xs[i], zs[i], vs[i], xs[r], zs[r], vs[r])
            r += 1
        for j in range(eta):
            piv = next((i for i in range(r, eta) if zs[i] >> j & 1), None)
            if piv is None:
                continue
            xs[r], xs[piv] = xs[piv], xs[r]
            zs[r], zs[piv] = zs[piv], zs[r]
            vs[r], vs[piv] = vs[piv], vs[r]
            for i in range(eta):
                if i != r and xs[i] == 0 and zs[i] >> j & 1:
                    xs[i], zs[i], vs[i] = _mul(xs[i], zs[i], vs[i], xs[r], zs[r], vs[r])
            r += 1
        return self

    def to_dense(self) -> np.ndarray:
        """Amplitude vector (test helper; exponential in eta)."""
        eta = self.eta
        out = np.zeros(2**eta, dtype=complex)
        for y in range(2**eta):
            # qubit 0 is the MSB of the dense index
            mask = 0
            for j in range(eta):
                if y >> (eta - 1 - j) & 1:
                    mask |= 1 << j
            out[y] = self.amplitude_at(mask)
        return out


def _add_octants(m1: int, m2: int):
    """(half_power, octant) of e^{i pi m1/4} + e^{i pi m2/4}, None when zero.

    The value is 2^(half_power/2) * e^{i pi oct/4}; inputs always differ by an
    even octant here.
    """
    d = (m2 - m1) % 8
    if d == 0:
        return 2, m1 % 8
    if d == 4:
        return None
    if d == 2:
        return 1, (m1 + 1) % 8
    if d == 6:
        return 1, (m1 + 7) % 8
    raise InternalInvariantError("octant sum with odd phase difference")


@dataclass
class ReductionCircuit:
    """Gates V with V|psi> = exp(i*pi*phase_oct/4)|0...0> for the source state."""

    eta: int
    gates: list
    phase_oct: int

    def conjugate_pauli(self, x: int, z: int, v: int):
        """Return V P V^dag for P = i^v X^x Z^z."""
        for g in self.gates:
            x, z, v = _conj_pauli(x, z, v, g)
        return x, z, v


def reduce_to_zero(state: StabilizerState) -> ReductionCircuit:
    """Disentangling circuit for a stabilizer state, with exact global phase.

    Mutates a working copy only; the caller's state is untouched.
    """
    st = state.copy()
    eta = st.eta
    gates = []

    def emit(*gate):
        gates.append(gate)
        st.apply_gate(gate)

    def bits_of(mask):
        out = []
        while mask:
            out.append((mask & -mask).bit_length() - 1)
            mask &= mask - 1
        return out

    def row_mul(i, j):
        st._pivots = None
        st.xs[i], st.zs[i], st.vs[i] = _mul(
            st.xs[i], st.zs[i], st.vs[i], st.xs[j], st.zs[j], st.vs[j]
        )

    def row_swap(i, j):
        st._pivots = None
        st.xs[i], st.xs[j] = st.xs[j], st.xs[i]
        st.zs[i], st.zs[j] = st.zs[j], st.zs[i]
        st.vs[i], st.vs[j] = st.vs[j], st.vs[i]

    for j in range(eta):
        cand = next((i for i in range(j, eta) if st.xs[i] >> j & 1), None)
        if cand is not None:
            row_swap(j, cand)
            for i in range(eta):
                if i != j and st.xs[i] >> j & 1:
                    row_mul(i, j)
            for c in bits_of(st.xs[j]):
                if c != j:
                    emit("CX", j, c)
            if st.zs[j] >> j & 1:
                emit("S", j)
            for c in bits_of(st.zs[j]):
                if c != j:
                    emit("CZ", j, c)
            emit("H", j)
        else:
            # +-Z_j lies in the group; splice it in as generator j
            sol = _solve_rows_for_z(st, j)
            repl, xg, zg, vg = sol
            st._pivots = None
            st.xs[repl], st.zs[repl], st.vs[repl] = xg, zg, vg
            row_swap(j, repl)
        for i in range(eta):
            if i != j and st.zs[i] >> j & 1:
                row_mul(i, j)
        if st.vs[j] == 2:
            emit("X", j)
        if st.xs[j] != 0 or st.zs[j] != 1 << j or st.vs[j] != 0:
            raise InternalInvariantError("state reduction failed to pin a qubit")
    if st.anchor != 0 or st.amp_half != 0:
        raise InternalInvariantError("state reduction left a non-trivial anchor")
    return ReductionCircuit(eta, gates, st.amp_oct)


def _solve_rows_for_z(st: StabilizerState, j: int):
    """Find a product of generators j.. equal to +-Z_j; return (row, x, z, v)."""
    eta = st.eta
    pivots = []  # (pivot position, x, z, v, member mask)
    for i in range(j, eta):
        x, z, v = st.xs[i], st.zs[i], st.vs[i]
        mask = 1 << i
        w = x | (z << eta)
        for pw, px, pz, pv, pm in pivots:
            if w >> pw & 1:
                x, z, v = _mul(x, z, v, px, pz, pv)
                mask ^= pm
                w = x | (z << eta)
        if w:
            pw = (w & -w).bit_length() - 1
            reduced = []
            for qw, qx, qz, qv, qm in pivots:
                if (qx | (qz << eta)) >> pw & 1:
                    qx, qz, qv = _mul(qx, qz, qv, x, z, v)
                    qm ^= mask
                reduced.append((qw, qx, qz, qv, qm))
            reduced.append((pw, x, z, v, mask))
            pivots = reduced
    tx, tz = 0, 1 << j
    tw = tx | (tz << eta)
    ax, az, av, am = 0, 0, 0, 0
    for pw, px, pz, pv, pm in pivots:
        if tw >> pw & 1:
            tw ^= px | (pz << eta)
            ax, az, av = _mul(ax, az, av, px, pz, pv)
            am ^= pm
    if tw or am == 0:
        raise InternalInvariantError("Z_j not found in the stabilizer group")
    repl = (am & -am).bit_length() - 1
    return repl, ax, az, av


def stab_inner(a: StabilizerState, b: StabilizerState) -> complex:
    """Exact complex inner product <a|b> of two stabilizer states."""
    if a.eta != b.eta:
        raise ValueError("qubit counts differ")
    red = reduce_to_zero(a)
    bb = b.copy()
    bb.apply_gates(red.gates)
    amp = bb.amplitude_at(0)
    return _cis(-red.phase_oct) * amp


def snapshot_state(tab: CliffordTableau, bits) -> StabilizerState:
    """Compressed snapshot U^dag |b> with the gate-decomposition phase convention."""
    blist = [int(b) for b in bits]
    if len(blist) != tab.eta:
        raise ValueError("bitstring length mismatch")
    gates = tableau_to_gates(tab)
    st = StabilizerState.from_bits(blist)
    st.apply_gates(_invert_gates(gates))
    return st.canonicalize()


def pauli_times_entangled(h: PauliString, n: int) -> StabilizerState:
    """Canonical form of (h tensor I_A) applied to the 2n-qubit entangled state."""
    if h.n != n:
        raise ValueError("Pauli acts on the wrong number of qubits")
    if h.phase_pow != 0:
        raise ValueError("term must have phase +1")
    st = StabilizerState.entangled_pairs(n)
    x, z = h.masks()
    st.apply_pauli(x, z, (x & z).bit_count() % 4)
    return st.canonicalize()


# ---------------------------------------------------------------------------
# snapshot record serialization ("PCSH1" records)


def _pack_bits(bits: list[int]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for k, bit in enumerate(bits):
        if bit:
            out[k >> 3] |= 1 << (k & 7)
    return bytes(out)


def _unpack_bits(buf: bytes, count: int) -> list[int]:
    return [(buf[k >> 3] >> (k & 7)) & 1 for k in range(count)]


def pack_snapshot_record(tab: CliffordTableau, bits) -> bytes:
    """One snapshot as: eta (2 bytes LE) + row bits + sign bits + outcome bits.

    Rows are the 2*eta tableau rows in order, each as eta x-bits (qubit 0
    first) then eta z-bits; all bit fields are packed little-endian and padded
    to a byte boundary at the end of the record.
    """
    eta = tab.eta
    blist = [int(b) for b in bits]
    if len(blist) != eta:
        raise ValueError("bitstring length mismatch")
    stream: list[int] = []
    for x, z, _ in tab.rows:
        stream += [x >> j & 1 for j in range(eta)]
        stream += [z >> j & 1 for j in range(eta)]
    stream += [s for _, _, s in tab.rows]
    stream += blist
    return eta.to_bytes(2, "little") + _pack_bits(stream)


def unpack_snapshot_record(buf: bytes, offset: int = 0):
    """Inverse of pack_snapshot_record; returns (tableau, bits, next_offset)."""
    eta = int.from_bytes(buf[offset : offset + 2], "little")
    nbits = 4 * eta * eta + 2 * eta + eta
    nbytes = (nbits + 7) // 8
    body = buf[offset + 2 : offset + 2 + nbytes]
    stream = _unpack_bits(body, nbits)
    rows = []
    pos = 0
    for _ in range(2 * eta):
        x = sum(stream[pos + j] << j for j in range(eta))
        z = sum(stream[pos + eta + j] << j for j in range(eta))
        rows.append([x, z, 0])
        pos += 2 * eta
    for i in range(2 * eta):
        rows[i][2] = stream[pos + i]
    pos += 2 * eta
    bits = stream[pos : pos + eta]
    tab = CliffordTableau(eta, tuple(tuple(r) for r in rows))
    return tab, bits, offset + 2 + nbytes
