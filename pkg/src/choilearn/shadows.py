"""Classical-shadow collection and expectation estimation.

Two measurement ensembles are supported: global random Cliffords on all
2n+1 qubits of the encoded state, and per-qubit random single-qubit
Cliffords restricted to the system and reference qubits (which implements
the partial trace over the ancilla copy implicitly).  Per-snapshot values
come from closed-form overlap formulas evaluated with the stabilizer
engine; estimates are combined by median of means.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .densesim import StateVector, apply_gate_sequence, maximally_entangled_state, measure_all
from .errors import PreconditionError
from .paulis import PauliString
from .rng import DOMAIN_SNAPSHOT, substream
from .stabilizer import (
    CliffordTableau,
    StabilizerState,
    _conj_pauli,
    _invert_gates,
    pack_snapshot_record,
    reduce_to_zero,
    sample_uniform_clifford,
    stab_inner,
    tableau_to_gates,
    unpack_snapshot_record,
)

SHADOW_MAGIC = b"PCSH1"


# ---------------------------------------------------------------------------
# state sources


class ExactStateSource:
    """Replays a fixed pure state; the trivial repeatable preparation."""

    def __init__(self, state: StateVector):
        self.state = state

    @property
    def num_qubits(self) -> int:
        return self.state.num_qubits

    def sample(self, rng) -> StateVector:
        return self.state.copy()

    def density(self) -> np.ndarray:
        return self.state.density()


# ---------------------------------------------------------------------------
# shadows


@dataclass(frozen=True)
class CliffordShadow:
    """N snapshots of (sampled tableau, outcome bits) on eta qubits."""

    eta: int
    snapshots: tuple
    seed: int

    def __len__(self):
        return len(self.snapshots)


@dataclass(frozen=True)
class PauliShadow:
    """N snapshots of (per-qubit Clifford labels, outcome bits) on n+1 qubits.

    Bit j < n addresses system qubit j; bit n addresses the reference qubit.
    Labels index the fixed 24-element single-qubit Clifford table.
    """

    n: int
    snapshots: tuple
    seed: int

    @property
    def eta(self) -> int:
        return self.n + 1

    def __len__(self):
        return len(self.snapshots)


def collect_clifford_shadow(source, n_snapshots: int, seed: int) -> CliffordShadow:
    """Measure ``n_snapshots`` fresh copies under uniformly random Cliffords.

    Snapshot i uses the derived substream (seed, SNAPSHOT, i), so collection
    order (or parallel collection) cannot change the result.
    """
    if n_snapshots < 1:
        raise PreconditionError("shadow needs at least one snapshot")
    eta = source.num_qubits
    snaps = []
    for i in range(n_snapshots):
        rng = substream(seed, DOMAIN_SNAPSHOT, i)
        tab = sample_uniform_clifford(eta, rng)
        psi = source.sample(rng)
        rotated = apply_gate_sequence(psi, tableau_to_gates(tab))
        bits = measure_all(rotated, rng)
        snaps.append((tab, bits))
    return CliffordShadow(eta, tuple(snaps), seed)


def collect_pauli_shadow(source, n_snapshots: int, seed: int) -> PauliShadow:
    """Single-qubit-Clifford shadow of the system+reference marginal.

    Only the n system qubits and the reference qubit are rotated and
    recorded; the ancilla copy is never touched, which realizes the partial
    trace over it.
    """
    if n_snapshots < 1:
        raise PreconditionError("shadow needs at least one snapshot")
    eta = source.num_qubits
    n = (eta - 1) // 2
    if eta != 2 * n + 1:
        raise PreconditionError("source is not an encoded state on 2n+1 qubits")
    table = single_qubit_cliffords()
    positions = list(range(n)) + [2 * n]
    snaps = []
    for i in range(n_snapshots):
        rng = substream(seed, DOMAIN_SNAPSHOT, i)
        labels = tuple(int(u) for u in rng.integers(0, 24, size=n + 1))
        psi = source.sample(rng)
        gates = []
        for pos, lab in zip(positions, labels):
            gates += [(name,) + tuple(pos for _ in args) for (name, *args) in table[lab].gates]
        rotated = apply_gate_sequence(psi, gates)
        full = measure_all(rotated, rng)
        bits = "".join(full[p] for p in positions)
        snaps.append((labels, bits))
    return PauliShadow(n, tuple(snaps), seed)


# ---------------------------------------------------------------------------
# decoding operators


def _phi_branch_state(n: int, c_bit: int) -> StabilizerState:
    return StabilizerState.entangled_pairs(n).append_qubit(c_bit).canonicalize()


@dataclass
class DecodingOperatorClifford:
    """Rank-one decoding operator for the global-Clifford ensemble.

    ``term`` None flags the normalization operator (reference-branch
    projector); otherwise the operator maps the reference branch onto the
    term branch, and its expectation against the encoded state is
    c_l / norm^2.
    """

    term: PauliString | None
    n: int

    def __post_init__(self):
        if self.term is not None and self.term.n != self.n:
            raise ValueError("term qubit count mismatch")
        if self.term is None:
            self.state = _phi_branch_state(self.n, 1)
        else:
            st = StabilizerState.entangled_pairs(self.n)
            x, z = self.term.masks()
            st.apply_pauli(x, z, (x & z).bit_count() % 4)
            self.state = st.append_qubit(0).canonicalize()

    @property
    def eta(self) -> int:
        return 2 * self.n + 1

    def dense(self) -> np.ndarray:
        """Dense matrix (oracle use)."""
        n = self.n
        phi = maximally_entangled_state(n).amps
        if self.term is None:
            proj1 = np.array([[0, 0], [0, 1]], dtype=complex)
            return np.kron(np.outer(phi, phi.conj()), proj1)
        left = (self.term.matrix() @ phi.reshape(2**n, 2**n)).reshape(-1)
        hop = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1| on C
        return np.kron(np.outer(left, phi.conj()), hop)

    def dense_plus(self) -> np.ndarray:
        o = self.dense()
        return o + o.conj().T

    def dense_minus(self) -> np.ndarray:
        o = self.dense()
        return 1j * o - 1j * o.conj().T


@dataclass
class DecodingOperatorPauli:
    """Decoding operator for the per-qubit ensemble on the S,C marginal.

    term case: (H_l tensor X_C)/2, spectral norm 1/2; normalization case:
    I tensor |1><1|_C, spectral norm 1.
    """

    term: PauliString | None
    n: int

    def __post_init__(self):
        if self.term is not None and self.term.n != self.n:
            raise ValueError("term qubit count mismatch")

    @property
    def eta(self) -> int:
        return self.n + 1

    def dense(self) -> np.ndarray:
        if self.term is None:
            proj1 = np.array([[0, 0], [0, 1]], dtype=complex)
            return np.kron(np.eye(2**self.n, dtype=complex), proj1)
        x = np.array([[0, 1], [1, 0]], dtype=complex)
        return np.kron(self.term.matrix(), x) / 2.0


# ---------------------------------------------------------------------------
# per-snapshot values, global-Clifford flavor


def clifford_snapshot_traces(tab: CliffordTableau, bits, op: DecodingOperatorClifford):
    """Closed-form per-snapshot traces via stabilizer inner products.

    For a term operator returns (plus, minus, combined) where combined is the
    complex (plus - i*minus)/2; for the normalization operator returns a
    single real value.  Reference implementation; the batch evaluator below
    computes the same numbers.
    """
    from .stabilizer import snapshot_state

    v = snapshot_state(tab, bits)
    factor = 2.0**op.eta + 1.0
    branch1 = _phi_branch_state(op.n, 1)
    b = stab_inner(v, branch1)
    if op.term is None:
        return factor * abs(b) ** 2 - 1.0
    a = stab_inner(v, op.state)
    cross = a * b.conjugate()
    plus = factor * 2.0 * cross.real
    minus = -factor * 2.0 * cross.imag
    return plus, minus, factor * cross


class CliffordShadowEvaluator:
    """Batch per-snapshot values for all terms plus the normalization flag.

    The fixed reference-branch state is disentangled once; every decoding
    overlap then reduces to a single basis amplitude of the transformed
    snapshot, one per operator.
    """

    def __init__(self, n: int, terms):
        self.n = n
        self.eta = 2 * n + 1
        base = _phi_branch_state(n, 0)
        self.red = reduce_to_zero(base)
        qs = []
        for term in terms:
            if term.n != n:
                raise ValueError("term qubit count mismatch")
            if term.phase_pow != 0:
                raise ValueError("terms must have phase +1")
            x, z = term.masks()
            qs.append(self.red.conjugate_pauli(x, z, (x & z).bit_count() % 4))
        self.term_qs = qs
        # reference branch = X on the C qubit applied to the base state
        self.alpha_q = self.red.conjugate_pauli(1 << (2 * n), 0, 0)
        self.factor = 2.0**self.eta + 1.0

    def _zero_amp(self, state: StabilizerState, q) -> complex:
        x, z, v = q
        amp = state.amplitude_at(x)
        if amp == 0:
            return 0j
        sign = -1.0 if (z & x).bit_count() & 1 else 1.0
        return (1j**v) * sign * amp

    def snapshot_values(self, tab: CliffordTableau, bits):
        """(complex term estimates, real normalization estimate) for one snapshot."""
        st = StabilizerState.from_bits(bits)
        st.apply_gates(_invert_gates(tableau_to_gates(tab)))
        st.apply_gates(self.red.gates)
        ab = self._zero_amp(st, self.alpha_q)
        alpha_val = self.factor * abs(ab) ** 2 - 1.0
        ests = np.empty(len(self.term_qs), dtype=complex)
        for i, q in enumerate(self.term_qs):
            al = self._zero_amp(st, q)
            ests[i] = self.factor * al.conjugate() * ab
        return ests, alpha_val

    def all_values(self, shadow: CliffordShadow):
        """(M x N complex matrix of term values, length-N normalization values)."""
        if shadow.eta != self.eta:
            raise PreconditionError("shadow qubit count mismatch")
        n_snap = len(shadow)
        term_vals = np.empty((len(self.term_qs), n_snap), dtype=complex)
        alpha_vals = np.empty(n_snap)
        for j, (tab, bits) in enumerate(shadow.snapshots):
            ests, av = self.snapshot_values(tab, bits)
            term_vals[:, j] = ests
            alpha_vals[j] = av
        return term_vals, alpha_vals


# ---------------------------------------------------------------------------
# per-snapshot values, per-qubit flavor


class _SingleQubitClifford:
    __slots__ = ("tableau", "gates", "matrix", "conj", "amp1")

    def __init__(self, tableau, gates, matrix, conj, amp1):
        self.tableau = tableau
        self.gates = gates
        self.matrix = matrix
        self.conj = conj  # letter -> (sign, letter) under U . U^dag
        self.amp1 = amp1  # |<b|U|1>|^2 for b = 0, 1


_SQC_TABLE = None


def single_qubit_cliffords():
    """The canonical 24-element single-qubit Clifford table, built once.

    Elements are every symplectic 1-qubit tableau with every sign pair,
    ordered by tableau key, so labels are stable across runs.
    """
    global _SQC_TABLE
    if _SQC_TABLE is not None:
        return _SQC_TABLE
    vecs = [(1, 0), (0, 1), (1, 1)]
    tabs = []
    for xi in vecs:
        for zi in vecs:
            if xi == zi:
                continue
            for sx in (0, 1):
                for sz in (0, 1):
                    tabs.append(CliffordTableau(1, ((xi[0], xi[1], sx), (zi[0], zi[1], sz))))
    tabs.sort(key=lambda t: t.key())
    table = []
    letters = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
    back = {(1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
    for tab in tabs:
        gates = tableau_to_gates(tab)
        mat = np.eye(2, dtype=complex)
        for col in (0, 1):
            v = np.zeros(2, dtype=complex)
            v[col] = 1
            mat[:, col] = apply_gate_sequence(StateVector(1, v), gates).amps
        conj = {}
        for name, (x, z) in letters.items():
            cx, cz, cv = x, z, (x & z) % 4
            for g in gates:
                cx, cz, cv = _conj_pauli(cx, cz, cv, g)
            delta = (cv - (cx & cz)) % 4
            sign = 1 if delta == 0 else -1
            conj[name] = (sign, back[(cx, cz)])
        amp1 = (abs(mat[0, 1]) ** 2, abs(mat[1, 1]) ** 2)
        table.append(_SingleQubitClifford(tab, gates, mat, conj, amp1))
    _SQC_TABLE = tuple(table)
    return _SQC_TABLE


def pauli_snapshot_value(labels, bits, op: DecodingOperatorPauli) -> float:
    """Per-snapshot estimate of Tr(inverted-snapshot * op), product form.

    Each qubit contributes 3 <b|U P U^dag|b> - Tr(P); the reference qubit
    contributes (3/2) <b|U X U^dag|b> for a term operator or
    3 |<b|U|1>|^2 - 1 for the normalization operator.
    """
    table = single_qubit_cliffords()
    n = op.n
    bvals = [int(b) for b in bits]
    if op.term is None:
        return 3.0 * table[labels[n]].amp1[bvals[n]] - 1.0
    sign, image = table[labels[n]].conj["X"]
    if image != "Z":
        return 0.0
    value = 1.5 * sign * (1.0 if bvals[n] == 0 else -1.0)
    for j in range(n):
        letter = op.term.letters[j]
        if letter == "I":
            continue
        sign, image = table[labels[j]].conj[letter]
        if image != "Z":
            return 0.0
        value *= 3.0 * sign * (1.0 if bvals[j] == 0 else -1.0)
    return value


def pauli_all_values(shadow: PauliShadow, ops) -> np.ndarray:
    out = np.empty((len(ops), len(shadow)))
    for j, (labels, bits) in enumerate(shadow.snapshots):
        for i, op in enumerate(ops):
            out[i, j] = pauli_snapshot_value(labels, bits, op)
    return out


# ---------------------------------------------------------------------------
# median of means


def median_of_means(values, k: int) -> float:
    """Median of K contiguous equal-size group means.

    A remainder of at most K-1 trailing values is dropped.  An even K
    averages the two middle group means.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise PreconditionError("no values to aggregate")
    if not 1 <= k <= vals.size:
        raise PreconditionError(f"group count {k} out of range for {vals.size} values")
    size = vals.size // k
    means = vals[: size * k].reshape(k, size).mean(axis=1)
    return float(np.median(means))


def default_group_count(num_operators: int, delta_s: float) -> int:
    """Standard group-count prescription 2*ln(2L/delta), at least 1."""
    return max(1, math.ceil(2.0 * math.log(2.0 * num_operators / delta_s)))


def estimate_clifford_expectation(shadow: CliffordShadow, op: DecodingOperatorClifford, k_groups: int):
    """Median-of-means estimate of Tr(rho O) from a global-Clifford shadow.

    Complex for term operators (median taken separately on real and
    imaginary parts), real for the normalization operator.
    """
    if op.eta != shadow.eta:
        raise PreconditionError("operator/shadow qubit count mismatch")
    if k_groups > len(shadow):
        raise PreconditionError("more groups than snapshots")
    ev = CliffordShadowEvaluator(op.n, [op.term] if op.term is not None else [])
    term_vals, alpha_vals = ev.all_values(shadow)
    if op.term is None:
        return median_of_means(alpha_vals, k_groups)
    vals = term_vals[0]
    return complex(median_of_means(vals.real, k_groups), median_of_means(vals.imag, k_groups))


def estimate_pauli_expectation(shadow: PauliShadow, op: DecodingOperatorPauli, k_groups: int) -> float:
    """Median-of-means estimate of Tr(rho O) from a per-qubit shadow."""
    if op.eta != shadow.eta:
        raise PreconditionError("operator/shadow qubit count mismatch")
    if k_groups > len(shadow):
        raise PreconditionError("more groups than snapshots")
    vals = pauli_all_values(shadow, [op])[0]
    return median_of_means(vals, k_groups)


# ---------------------------------------------------------------------------
# serialization


def write_clifford_shadow(shadow: CliffordShadow, path):
    """Binary format: magic "PCSH1", uint64 count, then packed records."""
    with open(path, "wb") as fh:
        fh.write(SHADOW_MAGIC)
        fh.write(struct.pack("<Q", len(shadow)))
        for tab, bits in shadow.snapshots:
            fh.write(pack_snapshot_record(tab, bits))


def read_clifford_shadow(path, seed: int = 0) -> CliffordShadow:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:5] != SHADOW_MAGIC:
        raise ValueError("not a shadow file (bad magic)")
    (count,) = struct.unpack_from("<Q", buf, 5)
    offset = 13
    snaps = []
    eta = None
    for _ in range(count):
        tab, bits, offset = unpack_snapshot_record(buf, offset)
        eta = tab.eta
        snaps.append((tab, "".join(str(b) for b in bits)))
    return CliffordShadow(eta if eta is not None else 0, tuple(snaps), seed)


def write_pauli_shadow(shadow: PauliShadow, path):
    """JSON-lines format: {"u": [label,...], "b": "0101"} per snapshot."""
    with open(path, "w") as fh:
        for labels, bits in shadow.snapshots:
            fh.write(json.dumps({"u": list(labels), "b": bits}) + "\n")


def read_pauli_shadow(path, seed: int = 0) -> PauliShadow:
    snaps = []
    n = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            labels = tuple(int(u) for u in doc["u"])
            bits = doc["b"]
            n = len(labels) - 1
            snaps.append((labels, bits))
    if n is None:
        raise ValueError("empty shadow file")
    return PauliShadow(n, tuple(snaps), seed)
