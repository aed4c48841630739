"""Exact dense statevector and matrix simulation.

This is the ground-truth oracle path: every stabilizer-formalism result is
validated against computations done here with explicit complex vectors and
matrices.  Register layout for encoded-Hamiltonian states on 2n+1 qubits:
qubits 0..n-1 are the system S, n..2n-1 the ancilla copy A, and qubit 2n the
reference qubit C.  Qubit 0 is the most significant bit of basis indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalInvariantError, PreconditionError
from .paulis import HamiltonianModel, PauliString, hs_inner
from .rng import as_generator

DEFAULT_DENSE_LIMIT = 8

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)

GATE_1Q = {"H": _H, "S": _S, "SDG": _SDG, "X": _X, "Z": _Z}


@dataclass
class StateVector:
    """Pure state on ``num_qubits`` qubits; qubit 0 is the index MSB."""

    num_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape != (2**self.num_qubits,):
            raise ValueError("amplitude vector has wrong length")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amps.copy())

    def density(self) -> np.ndarray:
        return np.outer(self.amps, self.amps.conj())


@dataclass
class PseudoChoiState:
    """Encoded-Hamiltonian state on 2n+1 qubits plus its normalization.

    ``kind`` is "exact" when the state encodes H itself (norm_const is
    alpha = sqrt(||c||^2 + 1)) or "block-encoded" when it encodes the
    rescaled Htilde/Delta (norm_const is gamma, with gamma in [1, sqrt(2)]).
    """

    state: StateVector
    norm_const: float
    kind: str
    delta: float | None = None


def check_dense_limit(n: int, limit: int = DEFAULT_DENSE_LIMIT):
    if n > limit:
        raise PreconditionError(
            f"dense path refused: n={n} exceeds the configured limit {limit}"
        )


def hamiltonian_matrix(model: HamiltonianModel, limit: int = DEFAULT_DENSE_LIMIT) -> np.ndarray:
    """Exact Hermitian 2^n x 2^n matrix of the model."""
    check_dense_limit(model.n, limit)
    d = 2**model.n
    out = np.zeros((d, d), dtype=complex)
    for c, term in zip(model.coeffs, model.terms):
        out += c * term.matrix()
    if np.max(np.abs(out - out.conj().T)) > 1e-12:
        raise InternalInvariantError("non-Hermitian Hamiltonian matrix")
    return out


def maximally_entangled_state(n: int) -> StateVector:
    """d^{-1/2} sum_i |i>_S |i>_A on 2n qubits (S qubits first)."""
    if n < 1:
        raise ValueError("n must be positive")
    d = 2**n
    amps = np.zeros(d * d, dtype=complex)
    amps[np.arange(d) * d + np.arange(d)] = 1.0 / math.sqrt(d)
    return StateVector(2 * n, amps)


def pseudo_choi_exact(model: HamiltonianModel, limit: int = DEFAULT_DENSE_LIMIT) -> PseudoChoiState:
    """Normalized [(H x I)|Phi>|0>_C + |Phi>|1>_C] / alpha for the exact H."""
    check_dense_limit(model.n, limit)
    n = model.n
    d = 2**n
    h = hamiltonian_matrix(model, limit)
    phi = maximally_entangled_state(n).amps.reshape(d, d)
    left = h @ phi
    amps = np.zeros(d * d * 2, dtype=complex)
    amps[0::2] = left.reshape(-1)
    amps[1::2] = phi.reshape(-1)
    alpha = math.sqrt(model.alpha_sq())
    amps /= alpha
    state = StateVector(2 * n + 1, amps)
    if abs(state.norm() - 1.0) > 1e-10:
        raise InternalInvariantError("encoded state is not normalized")
    return PseudoChoiState(state, alpha, "exact")


@dataclass
class BlockEncoding:
    """Unitary on n+1 qubits whose top-left block is 2*Htilde*t/pi.

    The block qubit B is the most significant qubit of the matrix index.
    Htilde = H + (eps_b/t) * E for a seeded Hermitian perturbation E with
    spectral norm 1, so ||H t - Htilde t|| = eps_b exactly.
    """

    n: int
    t: float
    eps_b: float
    u: np.ndarray
    htilde: np.ndarray

    @property
    def delta(self) -> float:
        return math.pi / (2.0 * self.t)

    def gamma_sq(self) -> float:
        """Normalization gamma^2 = d^{-1} Tr(Htilde^2)/Delta^2 + 1."""
        d = 2**self.n
        frob = float(np.real(np.trace(self.htilde @ self.htilde))) / d
        return frob / self.delta**2 + 1.0

    def success_probability(self) -> float:
        return self.gamma_sq() / 2.0

    def tilde_coeffs(self, terms: tuple[PauliString, ...]) -> np.ndarray:
        """Coefficients of Htilde on the given basis terms, d^{-1} Tr(Htilde H_l)."""
        d = 2**self.n
        return np.array(
            [float(np.real(np.trace(self.htilde @ t.matrix()))) / d for t in terms]
        )


def _random_unit_hermitian(
    d: int, rng: np.random.Generator, orthogonal_to: HamiltonianModel | None
) -> np.ndarray:
    for _ in range(16):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        e = (g + g.conj().T) / 2.0
        if orthogonal_to is not None:
            for term in orthogonal_to.terms:
                tm = term.matrix()
                e = e - (np.trace(tm @ e) / d) * tm
        norm = float(np.max(np.abs(np.linalg.eigvalsh(e))))
        if norm > 1e-12:
            return e / norm
    raise InternalInvariantError("failed to draw a nonzero perturbation")


def block_encoding_dilation(
    model: HamiltonianModel,
    t: float,
    eps_b: float,
    seed=0,
    orthogonal_to_model: bool = False,
    limit: int = DEFAULT_DENSE_LIMIT,
) -> BlockEncoding:
    """Exact unitary completion U = [[A, sqrt(I-A^2)], [sqrt(I-A^2), -A]].

    A = 2*Htilde*t/pi.  Requires 0 < t <= 1/(2||H||) and eps_b in [0, 1/2].
    """
    h = hamiltonian_matrix(model, limit)
    d = h.shape[0]
    norm = float(np.max(np.abs(np.linalg.eigvalsh(h))))
    if t <= 0:
        raise PreconditionError("evolution time t must be positive")
    if norm > 0 and t > 1.0 / (2.0 * norm) * (1 + 1e-12):
        raise PreconditionError(
            f"t={t} exceeds 1/(2||H||)={1.0 / (2.0 * norm)}"
        )
    if not 0.0 <= eps_b <= 0.5:
        raise PreconditionError("eps_b must lie in [0, 1/2]")
    htilde = h.copy()
    if eps_b > 0:
        rng = as_generator(seed)
        pert = _random_unit_hermitian(d, rng, model if orthogonal_to_model else None)
        htilde = h + (eps_b / t) * pert
    a = (2.0 * t / math.pi) * htilde
    evals, vecs = np.linalg.eigh(a)
    if np.max(np.abs(evals)) >= 1.0:
        raise PreconditionError("encoded block has norm >= 1 after perturbation")
    b = (vecs * np.sqrt(1.0 - evals**2)) @ vecs.conj().T
    u = np.block([[a, b], [b, -a]])
    if np.max(np.abs(u.conj().T @ u - np.eye(2 * d))) > 1e-10:
        raise InternalInvariantError("dilation is not unitary")
    return BlockEncoding(model.n, t, eps_b, u, htilde)


def prepare_pseudo_choi(be: BlockEncoding, seed) -> tuple[bool, PseudoChoiState | None]:
    """Simulate the heralded preparation circuit for one attempt.

    Hadamard on C, zero-controlled application of the block unitary on (B, S),
    projective measurement of B.  Outcome 0 (probability gamma^2/2) yields the
    encoded state of Htilde/Delta on the remaining 2n+1 qubits.
    """
    rng = as_generator(seed)
    n = be.n
    d = 2**n
    phi = maximally_entangled_state(n).amps.reshape(d, d)
    # tensor axes (S, A, C, B); start in |Phi>|0>_C|0>_B
    psi = np.zeros((d, d, 2, 2), dtype=complex)
    psi[:, :, 0, 0] = phi
    # Hadamard on C
    c0 = psi[:, :, 0, :].copy()
    c1 = psi[:, :, 1, :].copy()
    psi[:, :, 0, :] = (c0 + c1) / math.sqrt(2)
    psi[:, :, 1, :] = (c0 - c1) / math.sqrt(2)
    # U_block on (B, S), applied only where C == 0
    sub = psi[:, :, 0, :]  # axes (S, A, B)
    m = np.transpose(sub, (1, 2, 0)).reshape(d, 2 * d)  # (A, combined B:S)
    m = m @ be.u.T
    psi[:, :, 0, :] = np.transpose(m.reshape(d, 2, d), (2, 0, 1))
    # measure B
    p0 = float(np.sum(np.abs(psi[:, :, :, 0]) ** 2))
    expected = be.success_probability()
    if abs(p0 - expected) > 1e-10:
        raise InternalInvariantError(
            f"preparation success probability {p0} != analytic {expected}"
        )
    if rng.random() >= p0:
        return False, None
    amps = (psi[:, :, :, 0] / math.sqrt(p0)).reshape(-1)
    gamma = math.sqrt(be.gamma_sq())
    return True, PseudoChoiState(StateVector(2 * n + 1, amps), gamma, "block-encoded", be.delta)


_SQRT_HALF = 1.0 / math.sqrt(2.0)


def _split(amps: np.ndarray, target: int, eta: int):
    """View with the target qubit isolated as the middle axis."""
    return amps.reshape(1 << target, 2, 1 << (eta - 1 - target))


def _pair_view(amps: np.ndarray, a: int, b: int, eta: int):
    """View isolating qubits a < b as axes 1 and 3."""
    return amps.reshape(1 << a, 2, 1 << (b - a - 1), 2, 1 << (eta - 1 - b))


def _apply_gate_inplace(amps: np.ndarray, gate, eta: int):
    name = gate[0]
    for q in gate[1:]:
        if not 0 <= q < eta:
            raise ValueError(f"gate target {q} out of range for {eta} qubits")
    if name == "H":
        v = _split(amps, gate[1], eta)
        top = v[:, 0, :].copy()
        v[:, 0, :] += v[:, 1, :]
        v[:, 0, :] *= _SQRT_HALF
        v[:, 1, :] *= -1
        v[:, 1, :] += top
        v[:, 1, :] *= _SQRT_HALF
    elif name == "S":
        _split(amps, gate[1], eta)[:, 1, :] *= 1j
    elif name == "SDG":
        _split(amps, gate[1], eta)[:, 1, :] *= -1j
    elif name == "Z":
        _split(amps, gate[1], eta)[:, 1, :] *= -1
    elif name == "X":
        v = _split(amps, gate[1], eta)
        v[:, [0, 1], :] = v[:, [1, 0], :]
    elif name == "CX":
        c, t = gate[1], gate[2]
        if c == t:
            raise ValueError("CX control equals target")
        if c < t:
            v = _pair_view(amps, c, t, eta)
            v[:, 1, :, [0, 1], :] = v[:, 1, :, [1, 0], :]
        else:
            v = _pair_view(amps, t, c, eta)
            v[:, [0, 1], :, 1, :] = v[:, [1, 0], :, 1, :]
    elif name == "CZ":
        a, b = gate[1], gate[2]
        if a == b:
            raise ValueError("CZ qubits coincide")
        v = _pair_view(amps, min(a, b), max(a, b), eta)
        v[:, 1, :, 1, :] *= -1
    else:
        raise ValueError(f"unknown gate {name!r}")


def apply_gate_sequence(state: StateVector, gates) -> StateVector:
    """Apply a list of ("H"|"S"|"SDG"|"X"|"Z", t) / ("CX", c, t) / ("CZ", a, b) gates."""
    eta = state.num_qubits
    amps = state.amps.copy()
    for gate in gates:
        _apply_gate_inplace(amps, gate, eta)
    return StateVector(eta, amps)


def measure_all(state: StateVector, seed) -> str:
    """Sample a computational-basis bitstring; qubit 0 is the leftmost bit."""
    if abs(state.norm() - 1.0) > 1e-8:
        raise ValueError("state is not normalized")
    rng = as_generator(seed)
    probs = np.abs(state.amps) ** 2
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    idx = min(idx, len(probs) - 1)
    return format(idx, f"0{state.num_qubits}b")


def dense_expectation(state, operator: np.ndarray) -> complex:
    """Exact Tr(rho O) for a StateVector or an explicit density matrix."""
    operator = np.asarray(operator)
    if isinstance(state, StateVector):
        if operator.shape != (len(state.amps),) * 2:
            raise ValueError("operator dimension mismatch")
        return complex(np.vdot(state.amps, operator @ state.amps))
    rho = np.asarray(state)
    if rho.shape != operator.shape:
        raise ValueError("operator dimension mismatch")
    return complex(np.einsum("ij,ji->", rho, operator))


def partial_trace_ancilla(rho: np.ndarray, n: int) -> np.ndarray:
    """Trace out the A register of a (2n+1)-qubit density matrix, leaving S,C."""
    d = 2**n
    r = rho.reshape(d, d, 2, d, d, 2)
    out = np.einsum("iajkal->ijkl", r)
    return out.reshape(2 * d, 2 * d)


def reduced_sc_state(pcs: PseudoChoiState, n: int) -> np.ndarray:
    """Density matrix on S,C after discarding A."""
    return partial_trace_ancilla(pcs.state.density(), n)


def spectral_norm(h: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(h))))
