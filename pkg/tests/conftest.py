"""Shared oracle helpers for the test suite.

Dense computations here are intentionally independent of the stabilizer
engine: states are built by explicit matrix/vector arithmetic so that engine
results are checked against straight linear algebra.
"""

import numpy as np
import pytest

from choilearn.densesim import StateVector, apply_gate_sequence

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def random_gate_list(eta, count, rng):
    """A random Clifford circuit over the engine gate set."""
    gates = []
    for _ in range(count):
        kind = int(rng.integers(0, 6))
        t = int(rng.integers(0, eta))
        if kind == 0:
            gates.append(("H", t))
        elif kind == 1:
            gates.append(("S", t))
        elif kind == 2:
            gates.append(("SDG", t))
        elif kind == 3:
            gates.append(("X", t))
        elif kind == 4:
            gates.append(("Z", t))
        else:
            if eta == 1:
                gates.append(("H", t))
                continue
            c = int(rng.integers(0, eta))
            while c == t:
                c = int(rng.integers(0, eta))
            gates.append(("CX", c, t))
    return gates


def dense_from_gates(eta, gates, start_index=0):
    """Apply a gate list to a basis state with plain dense arithmetic."""
    amps = np.zeros(2**eta, dtype=complex)
    amps[start_index] = 1.0
    return apply_gate_sequence(StateVector(eta, amps), gates).amps


def gate_list_matrix(eta, gates):
    """Full unitary of a gate list, column by column."""
    u = np.empty((2**eta, 2**eta), dtype=complex)
    for col in range(2**eta):
        u[:, col] = dense_from_gates(eta, gates, col)
    return u


def pauli_matrix_from_masks(eta, x, z, v):
    """Dense i^v X^x Z^z with qubit 0 as the most significant factor."""
    out = np.array([[1j**v]], dtype=complex)
    for j in range(eta):
        m = np.eye(2, dtype=complex)
        if x >> j & 1:
            m = m @ _X
        if z >> j & 1:
            m = m @ _Z
        out = np.kron(out, m)
    return out


def dense_clifford_snapshot(tab, bits, eta):
    """(2^eta + 1) U^dag|b><b|U - I via dense circuit application."""
    from choilearn.stabilizer import _invert_gates, tableau_to_gates

    amps = np.zeros(2**eta, dtype=complex)
    amps[int(bits, 2)] = 1.0
    w = apply_gate_sequence(StateVector(eta, amps), _invert_gates(tableau_to_gates(tab))).amps
    return (2**eta + 1) * np.outer(w, w.conj()) - np.eye(2**eta)


def random_stab_and_dense(eta, rng, depth=24):
    """Paired (engine state, dense amplitudes) built from one random circuit."""
    from choilearn.stabilizer import StabilizerState

    bits = [int(b) for b in rng.integers(0, 2, size=eta)]
    gates = random_gate_list(eta, depth, rng)
    st = StabilizerState.from_bits(bits)
    st.apply_gates(gates)
    dense = dense_from_gates(eta, gates, int("".join(map(str, bits)), 2))
    return st, dense


def enumerate_clifford_classes(eta, generator_gates):
    """BFS closure of tableaux under the given gates (phase classes)."""
    from choilearn.stabilizer import CliffordTableau, _letter_v, _rows_apply, _v_to_sign

    def apply(tab, gate):
        xs = [r[0] for r in tab.rows]
        zs = [r[1] for r in tab.rows]
        vs = [_letter_v(*r) for r in tab.rows]
        _rows_apply(xs, zs, vs, gate)
        rows = tuple((x, z, _v_to_sign(x, z, v)) for x, z, v in zip(xs, zs, vs))
        return CliffordTableau(eta, rows)

    start = CliffordTableau.identity(eta)
    seen = {start.key()}
    frontier = [start]
    while frontier:
        nxt = []
        for tab in frontier:
            for gate in generator_gates:
                new = apply(tab, gate)
                if new.key() not in seen:
                    seen.add(new.key())
                    nxt.append(new)
        frontier = nxt
    return seen


@pytest.fixture
def rng():
    return np.random.default_rng(20250809)
