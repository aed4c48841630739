"""Robustness experiments: hidden orthogonal terms and noisy state preparation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densesim import StateVector, block_encoding_dilation, hamiltonian_matrix, spectral_norm
from .errors import ConfigError, PreconditionError
from .learner import LearningReport, find_coeff_unitary
from .paulis import HamiltonianModel, PauliString
from .rng import DOMAIN_NOISE, substream


@dataclass(frozen=True)
class UnderspecifiedInstance:
    """A model with one hidden extra term, orthogonal to every known term.

    The true generator of the dynamics is sum_j c_j H_j + chi * E where E is
    a basis Pauli absent from the known set (hence Hilbert-Schmidt
    orthogonal to it, with unit normalized square).
    """

    known_model: HamiltonianModel
    hidden_term: PauliString
    chi: float

    def __post_init__(self):
        if self.hidden_term.n != self.known_model.n:
            raise ValueError("hidden term qubit count mismatch")
        if self.hidden_term.phase_pow != 0 or self.hidden_term.is_identity():
            raise ValueError("hidden term must be a non-identity phase +1 Pauli")
        if any(t.letters == self.hidden_term.letters for t in self.known_model.terms):
            raise ValueError("hidden term must be orthogonal to every known term")

    def full_model(self) -> HamiltonianModel:
        terms = self.known_model.terms + (self.hidden_term,)
        coeffs = np.append(self.known_model.coeffs, self.chi)
        return HamiltonianModel(self.known_model.n, terms, coeffs)


def estimate_chi(gamma_sq_hat: float, delta: float, c_hat) -> tuple[float, float]:
    """Residual hidden-term weight from the normalization estimate.

    chi_sq_hat = (gamma_sq_hat - 1) * delta^2 - ||c_hat||^2; the square root
    is clamped at zero, so a negative chi_sq_hat (sampling noise consistent
    with no hidden term) yields chi_hat = 0.
    """
    if delta <= 0:
        raise PreconditionError("delta must be positive")
    c = np.asarray(c_hat, dtype=float)
    chi_sq = (gamma_sq_hat - 1.0) * delta**2 - float(np.dot(c, c))
    return chi_sq, math.sqrt(max(chi_sq, 0.0))


def run_underspecified(
    inst: UnderspecifiedInstance,
    seed: int,
    t: float | None = None,
    n_success: int = 1,
    flavor: str = "clifford",
    k_groups: int | None = None,
    dense_limit: bool = False,
    eps_b: float = 0.0,
    eps_s: float | None = None,
    attempt_cap: int | None = None,
) -> LearningReport:
    """Learn the known coefficients while the dynamics hide an extra term.

    The preparation encodes the full Hamiltonian (so t must normalize it,
    including the hidden weight), but only the known terms are decoded.  The
    residual of the normalization estimate witnesses the hidden weight.
    """
    full = inst.full_model()
    norm = spectral_norm(hamiltonian_matrix(full))
    if t is None:
        t = 1.0 / (2.0 * norm) if norm > 0 else 1.0
    elif norm > 0 and t > 1.0 / (2.0 * norm) * (1 + 1e-12):
        raise PreconditionError(
            "t too large to normalize the full Hamiltonian including the hidden term"
        )
    be = block_encoding_dilation(full, t, eps_b, seed=seed)
    gamma_sq = be.gamma_sq()
    if eps_s is not None and eps_s * gamma_sq > 1.0:
        raise ConfigError("requires eps_s * gamma^2 <= 1")
    report = find_coeff_unitary(
        be, be.delta, inst.known_model.terms, n_success, seed,
        flavor=flavor, k_groups=k_groups, dense_limit=dense_limit,
        attempt_cap=attempt_cap,
    )
    chi_sq, chi = estimate_chi(report.norm_estimate, be.delta, report.coeff_estimates)
    report.residual_chi = chi
    report.extra.update(
        {
            "chi_hat": chi,
            "chi_sq_hat": chi_sq,
            "chi_flagged": bool(chi_sq > 0.0),
            "omega": 0.0,
        }
    )
    report.attach_truth(inst.known_model.coeffs)
    return report


class NoisySource:
    """Emits the base state with probability 1-omega, else a draw from rho_perp.

    Valid as a sampling model because every downstream statistic is linear
    in the density operator.  rho_perp defaults to the maximally mixed state;
    a caller-supplied density matrix is sampled via its eigendecomposition.
    """

    def __init__(self, base, omega: float, perp_kind="maximally-mixed", seed: int = 0):
        if not 0.0 <= omega <= 1.0:
            raise PreconditionError("omega must lie in [0, 1]")
        self.base = base
        self.omega = omega
        self.seed = seed
        self._calls = 0
        self.eta = base.num_qubits
        if isinstance(perp_kind, str):
            if perp_kind != "maximally-mixed":
                raise ConfigError(f"unknown perp_kind {perp_kind!r}")
            self._perp_evals = None
            self._perp_evecs = None
        else:
            rho = np.asarray(perp_kind, dtype=complex)
            if rho.shape != (2**self.eta, 2**self.eta):
                raise ConfigError("perp density has the wrong dimension")
            evals, evecs = np.linalg.eigh(rho)
            evals = np.clip(evals.real, 0.0, None)
            self._perp_evals = evals / evals.sum()
            self._perp_evecs = evecs

    @property
    def num_qubits(self) -> int:
        return self.eta

    def _perp_sample(self, rng) -> StateVector:
        if self._perp_evals is None:
            idx = int(rng.integers(0, 2**self.eta))
            amps = np.zeros(2**self.eta, dtype=complex)
            amps[idx] = 1.0
            return StateVector(self.eta, amps)
        idx = int(np.searchsorted(np.cumsum(self._perp_evals), rng.random(), side="right"))
        idx = min(idx, len(self._perp_evals) - 1)
        return StateVector(self.eta, self._perp_evecs[:, idx].copy())

    def sample(self, rng=None) -> StateVector:
        if rng is None:
            rng = substream(self.seed, DOMAIN_NOISE, self._calls)
            self._calls += 1
        if rng.random() < self.omega:
            return self._perp_sample(rng)
        return self.base.sample(rng)

    def density(self) -> np.ndarray:
        if self._perp_evals is None:
            perp = np.eye(2**self.eta, dtype=complex) / 2**self.eta
        else:
            perp = (self._perp_evecs * self._perp_evals) @ self._perp_evecs.conj().T
        return (1.0 - self.omega) * self.base.density() + self.omega * perp


def mix_noise(source, omega: float, perp_kind="maximally-mixed", seed: int = 0) -> NoisySource:
    """Wrap a repeatable preparation with preparation noise of weight omega."""
    return NoisySource(source, omega, perp_kind, seed)


def run_noisy(
    be,
    terms,
    omega: float,
    n_snapshots: int,
    seed: int,
    flavor: str = "clifford",
    k_groups: int | None = None,
    dense_limit: bool = False,
    perp_kind="maximally-mixed",
) -> LearningReport:
    """Learn rescaled coefficients from an omega-noisy resource preparation."""
    from .learner import find_coeff_clifford, find_coeff_pauli, pseudo_choi_of_block
    from .shadows import ExactStateSource

    base = ExactStateSource(pseudo_choi_of_block(be))
    source = mix_noise(base, omega, perp_kind, seed)
    recover = find_coeff_clifford if flavor == "clifford" else find_coeff_pauli
    report = recover(
        source, terms, n_snapshots, seed,
        k_groups=k_groups, dense_limit=dense_limit,
    )
    report.coeff_estimates = be.delta * report.coeff_estimates
    report.flavor = flavor
    report.delta = be.delta
    report.extra["omega"] = omega
    return report
