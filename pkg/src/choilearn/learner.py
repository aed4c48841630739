"""Coefficient-recovery algorithms and closed-form sample/query budgets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .densesim import (
    BlockEncoding,
    StateVector,
    dense_expectation,
    maximally_entangled_state,
    partial_trace_ancilla,
    prepare_pseudo_choi,
)
from .errors import EstimateAbortError, InternalInvariantError, PreconditionError
from .paulis import PauliString
from .shadows import (
    CliffordShadowEvaluator,
    DecodingOperatorClifford,
    DecodingOperatorPauli,
    collect_clifford_shadow,
    collect_pauli_shadow,
    default_group_count,
    median_of_means,
    pauli_all_values,
)

DEFAULT_DELTA_S = 0.1


# ---------------------------------------------------------------------------
# reports


@dataclass
class LearningReport:
    """Everything a learning run produced, ground-truth errors included when known."""

    coeff_estimates: np.ndarray
    norm_estimate: float  # estimate of alpha^2 (exact path) or gamma^2 (unitary path)
    flavor: str
    samples_used: int
    queries_used: int
    seed: int
    delta: float | None = None
    residual_chi: float | None = None
    l2_error: float | None = None
    linf_error: float | None = None
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def attach_truth(self, true_coeffs):
        err = np.asarray(self.coeff_estimates) - np.asarray(true_coeffs)
        self.l2_error = float(np.linalg.norm(err))
        self.linf_error = float(np.max(np.abs(err)))
        return self

    def to_dict(self) -> dict:
        doc = {
            "coeff_estimates": [float(c) for c in self.coeff_estimates],
            "norm_estimate": self.norm_estimate,
            "flavor": self.flavor,
            "samples_used": self.samples_used,
            "queries_used": self.queries_used,
            "seed": self.seed,
            "delta": self.delta,
            "residual_chi": self.residual_chi,
            "l2_error": self.l2_error,
            "linf_error": self.linf_error,
            "diagnostics": self.diagnostics,
        }
        doc.update(self.extra)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> dict:
        """Flat scalar view for CSV export."""
        return {
            "flavor": self.flavor,
            "norm_estimate": self.norm_estimate,
            "samples_used": self.samples_used,
            "queries_used": self.queries_used,
            "l2_error": "" if self.l2_error is None else self.l2_error,
            "linf_error": "" if self.linf_error is None else self.linf_error,
            "residual_chi": "" if self.residual_chi is None else self.residual_chi,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# state sources for the unitary path


class PreparedChoiSource:
    """Repeats the heralded preparation circuit until it succeeds.

    Total attempts are recorded; exceeding the cap (4x the two-sided
    concentration bound by default) aborts, which flags a pathological
    success probability.
    """

    def __init__(self, be: BlockEncoding, attempt_cap: int | None = None):
        self.be = be
        self.attempts = 0
        self.successes = 0
        self.attempt_cap = attempt_cap
        # the circuit is deterministic up to the heralding measurement, so the
        # post-success state can be cached; the first attempt still runs the
        # full simulation (which cross-checks the success probability)
        self._cached_state = None
        self._p_success = be.success_probability()

    @property
    def num_qubits(self) -> int:
        return 2 * self.be.n + 1

    def sample(self, rng) -> StateVector:
        while True:
            self.attempts += 1
            if self.attempt_cap is not None and self.attempt_cap < self.attempts:
                raise PreconditionError(
                    f"preparation attempt cap {self.attempt_cap} exceeded after "
                    f"{self.successes} successes"
                )
            if self._cached_state is None:
                ok, pcs = prepare_pseudo_choi(self.be, rng)
                if ok:
                    self._cached_state = pcs.state
            else:
                # same single-draw consumption as the full circuit simulation
                ok = rng.random() < self._p_success
            if ok:
                self.successes += 1
                return self._cached_state.copy()

    def density(self) -> np.ndarray:
        return pseudo_choi_of_block(self.be).density()


def pseudo_choi_of_block(be: BlockEncoding) -> StateVector:
    """The exact post-success state [(Htilde/Delta x I)|Phi>|0> + |Phi>|1>]/gamma."""
    n = be.n
    d = 2**n
    phi = maximally_entangled_state(n).amps.reshape(d, d)
    left = (be.htilde / be.delta) @ phi
    amps = np.zeros(2 * d * d, dtype=complex)
    amps[0::2] = left.reshape(-1)
    amps[1::2] = phi.reshape(-1)
    amps /= math.sqrt(be.gamma_sq())
    return StateVector(2 * n + 1, amps)


# ---------------------------------------------------------------------------
# recovery algorithms


def _check_terms(terms):
    terms = tuple(terms)
    if not terms:
        raise PreconditionError("need at least one term to decode")
    n = terms[0].n
    for t in terms:
        if t.n != n or t.phase_pow != 0 or t.is_identity():
            raise PreconditionError("terms must be non-identity phase +1 Paulis")
    return terms, n


def _finalize(raw, o_norm, *, flavor, samples, queries, seed, k, imag_leak):
    if o_norm <= 0:
        raise EstimateAbortError(
            f"normalization estimate {o_norm:.3g} is not positive; increase the "
            "snapshot budget"
        )
    coeffs = np.asarray(raw, dtype=float) / o_norm
    return LearningReport(
        coeff_estimates=coeffs,
        norm_estimate=1.0 / o_norm,
        flavor=flavor,
        samples_used=samples,
        queries_used=queries,
        seed=seed,
        diagnostics={"group_count": k, "imag_leakage": imag_leak},
    )


def find_coeff_clifford(
    source,
    terms,
    n_snapshots: int,
    seed: int,
    k_groups: int | None = None,
    delta_s: float = DEFAULT_DELTA_S,
    dense_limit: bool = False,
) -> LearningReport:
    """Recover coefficients from encoded states via a global-Clifford shadow.

    Estimates every term expectation and the normalization expectation from
    one shadow of ``n_snapshots`` copies, then divides out the normalization.
    ``dense_limit`` replaces the empirical means by exact dense expectations
    (the infinite-shadow limit) and uses no randomness.
    """
    terms, n = _check_terms(terms)
    if dense_limit:
        rho = source.density()
        ops = [DecodingOperatorClifford(t, n) for t in terms]
        alpha_op = DecodingOperatorClifford(None, n)
        vals = np.array([dense_expectation(rho, op.dense()) for op in ops])
        o_norm = float(dense_expectation(rho, alpha_op.dense()).real)
        return _finalize(
            vals.real, o_norm, flavor="clifford", samples=0, queries=0, seed=seed,
            k=0, imag_leak=float(np.max(np.abs(vals.imag))),
        )
    k = k_groups if k_groups is not None else default_group_count(2 * len(terms) + 1, delta_s)
    if n_snapshots < k:
        raise PreconditionError(f"snapshot budget {n_snapshots} below group count {k}")
    shadow = collect_clifford_shadow(source, n_snapshots, seed)
    term_vals, alpha_vals = CliffordShadowEvaluator(n, terms).all_values(shadow)
    o_norm = median_of_means(alpha_vals, k)
    raw = np.empty(len(terms))
    imag_leak = 0.0
    for i in range(len(terms)):
        raw[i] = median_of_means(term_vals[i].real, k)
        imag_leak = max(imag_leak, abs(median_of_means(term_vals[i].imag, k)))
    return _finalize(
        raw, o_norm, flavor="clifford", samples=n_snapshots, queries=0, seed=seed,
        k=k, imag_leak=imag_leak,
    )


def find_coeff_pauli(
    source,
    terms,
    n_snapshots: int,
    seed: int,
    k_groups: int | None = None,
    delta_s: float = DEFAULT_DELTA_S,
    dense_limit: bool = False,
) -> LearningReport:
    """Recover coefficients via per-qubit Clifford shadows of the S,C marginal."""
    terms, n = _check_terms(terms)
    ops = [DecodingOperatorPauli(t, n) for t in terms]
    alpha_op = DecodingOperatorPauli(None, n)
    if dense_limit:
        rho = partial_trace_ancilla(source.density(), n)
        vals = np.array([dense_expectation(rho, op.dense()) for op in ops])
        o_norm = float(dense_expectation(rho, alpha_op.dense()).real)
        return _finalize(
            vals.real, o_norm, flavor="pauli", samples=0, queries=0, seed=seed,
            k=0, imag_leak=float(np.max(np.abs(vals.imag))),
        )
    k = k_groups if k_groups is not None else default_group_count(2 * len(terms) + 1, delta_s)
    if n_snapshots < k:
        raise PreconditionError(f"snapshot budget {n_snapshots} below group count {k}")
    shadow = collect_pauli_shadow(source, n_snapshots, seed)
    all_vals = pauli_all_values(shadow, ops + [alpha_op])
    o_norm = median_of_means(all_vals[-1], k)
    raw = np.array([median_of_means(all_vals[i], k) for i in range(len(terms))])
    return _finalize(
        raw, o_norm, flavor="pauli", samples=n_snapshots, queries=0, seed=seed,
        k=k, imag_leak=0.0,
    )


def find_coeff_unitary(
    be: BlockEncoding,
    delta: float,
    terms,
    n_success: int,
    seed: int,
    flavor: str = "clifford",
    k_groups: int | None = None,
    delta_s: float = DEFAULT_DELTA_S,
    dense_limit: bool = False,
    attempt_cap: int | None = None,
) -> LearningReport:
    """Learn rescaled coefficients by querying the heralded preparation circuit.

    Runs the preparation until ``n_success`` copies exist (recording total
    attempts), feeds them to the chosen shadow recovery, and multiplies the
    estimates by delta.  The returned norm_estimate is the gamma^2 estimate.
    """
    if abs(delta - be.delta) > 1e-9 * max(1.0, abs(delta)):
        raise PreconditionError("delta disagrees with the block encoding (pi/(2t))")
    if n_success < 1:
        raise PreconditionError("need at least one successful preparation")
    if attempt_cap is None and not dense_limit:
        attempt_cap = 4 * chernoff_attempts(n_success, be.gamma_sq(), 0.01)
    source = PreparedChoiSource(be, attempt_cap)
    recover = find_coeff_clifford if flavor == "clifford" else find_coeff_pauli
    report = recover(
        source, terms, n_success, seed,
        k_groups=k_groups, delta_s=delta_s, dense_limit=dense_limit,
    )
    report.coeff_estimates = delta * report.coeff_estimates
    report.flavor = flavor
    report.delta = delta
    report.queries_used = source.attempts
    return report


# ---------------------------------------------------------------------------
# budgets


@dataclass(frozen=True)
class BudgetSpec:
    """Inputs to the closed-form sample and query budgets.

    ``alpha_sq`` is the squared normalization bound: alpha^2 for the exact
    path, gamma^2 for the unitary path.  ``const`` scales every budget whose
    stated form hides a constant factor.
    """

    m: int
    epsilon: float
    delta: float
    alpha_sq: float
    c_max: float
    t: float | None = None
    k: int | None = None
    const: float = 1.0
    norm_bound: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise PreconditionError("m must be at least 1")
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise PreconditionError("epsilon and delta must lie in (0, 1)")
        if self.alpha_sq < 1.0:
            raise PreconditionError("alpha_sq must be at least 1")
        if self.c_max < 0:
            raise PreconditionError("c_max must be nonnegative")
        if self.t is not None:
            if self.t <= 0:
                raise PreconditionError("t must be positive")
            if self.norm_bound is not None and self.norm_bound > 0:
                if self.t > 1.0 / (2.0 * self.norm_bound) * (1 + 1e-12):
                    raise PreconditionError("t exceeds 1/(2*norm bound)")

    @staticmethod
    def from_model(model, epsilon, delta, t=None, k=None, const=1.0):
        return BudgetSpec(
            m=model.m,
            epsilon=epsilon,
            delta=delta,
            alpha_sq=model.alpha_sq(),
            c_max=model.c_max(),
            t=t,
            k=k,
            const=const,
            norm_bound=model.one_norm(),
        )


def shadow_sample_count(spec: BudgetSpec, flavor: str = "clifford") -> int:
    """Copies needed by the shadow recovery at (epsilon, delta), rounded up.

    const * alpha^4 (c_max + 1) M ln(M/delta) / epsilon^2, with an extra 3^k
    for the per-qubit flavor (its shadow-norm bound grows with locality).
    """
    base = (
        spec.const
        * spec.alpha_sq**2
        * (spec.c_max + 1.0)
        * spec.m
        * math.log(spec.m / spec.delta)
        / spec.epsilon**2
    )
    if flavor == "pauli":
        if spec.k is None:
            raise PreconditionError("per-qubit flavor needs the locality k")
        base *= 3.0**spec.k
    elif flavor != "clifford":
        raise PreconditionError(f"unknown flavor {flavor!r}")
    return math.ceil(base)


def epsilon_s_for(epsilon: float, m: int, alpha: float, c_max: float) -> float:
    """Largest per-operator shadow error that still meets the l2 target.

    epsilon / (alpha^2 sqrt(c_max^2 + 1) sqrt(M)).
    """
    if epsilon <= 0 or m < 1 or alpha <= 0 or c_max < 0:
        raise PreconditionError("arguments must be positive (c_max nonnegative)")
    return epsilon / (alpha**2 * math.sqrt(c_max**2 + 1.0) * math.sqrt(m))


def chernoff_attempts(n_success: int, gamma_sq: float, delta_failure: float) -> int:
    """Preparation attempts guaranteeing n_success copies w.p. 1 - delta_failure.

    Exact two-sided form 4 ln(1/delta)/gamma^2 + 4 n/gamma^2 (not the
    asymptotic version); always at least the 2 n/gamma^2 validity floor.
    """
    if n_success < 1 or not 0 < delta_failure < 1 or gamma_sq < 1.0:
        raise PreconditionError("invalid concentration-bound arguments")
    val = 4.0 * math.log(1.0 / delta_failure) / gamma_sq + 4.0 * n_success / gamma_sq
    if val < 2.0 * n_success / gamma_sq:
        raise InternalInvariantError("attempt bound fell below its validity floor")
    return math.ceil(val)


@dataclass(frozen=True)
class UnitaryBudget:
    eps_c: float
    eps_b: float
    n_success: int
    attempts: int


def unitary_query_budget(spec: BudgetSpec) -> UnitaryBudget:
    """Error split and preparation counts for the unitary path.

    Splits the budget as eps_c = eps/2 (learning) and eps_b = eps*t/(2M)
    (encoding), halves delta between the shadow stage and the preparation
    stage, sizes the shadow stage from the rescaled-coefficient error
    propagation, and converts successes to attempts with the exact
    concentration bound.
    """
    if spec.t is None:
        raise PreconditionError("unitary budget needs the evolution time t")
    eps_c = spec.epsilon / 2.0
    eps_b = spec.epsilon * spec.t / (2.0 * spec.m)
    delta_half = spec.delta / 2.0
    big_delta = math.pi / (2.0 * spec.t)
    gamma_sq = spec.alpha_sq
    n_success = math.ceil(
        spec.const
        * spec.m
        * gamma_sq**2
        * (spec.c_max**2 + big_delta**2)
        * math.log(spec.m / delta_half)
        / eps_c**2
    )
    attempts = chernoff_attempts(n_success, gamma_sq, delta_half)
    return UnitaryBudget(eps_c, eps_b, n_success, attempts)
