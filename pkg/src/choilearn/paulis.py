"""Exact Pauli-string algebra, k-local term enumeration, and random model generation."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .rng import DOMAIN_MODEL, substream

LETTERS = "IXYZ"

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# letter -> (x bit, z bit); Y carries an implicit factor i relative to XZ
_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_FROM_XZ = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}

PHASES = (1, 1j, -1, -1j)


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli operator i**phase_pow * L_0 x L_1 x ... x L_{n-1}.

    Qubit 0 is the leftmost letter and the most significant bit of dense
    basis-state indices.  Basis terms of a Hamiltonian always have
    phase_pow == 0.
    """

    n: int
    letters: str
    phase_pow: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one qubit")
        if len(self.letters) != self.n:
            raise ValueError(f"expected {self.n} letters, got {len(self.letters)!r}")
        bad = set(self.letters) - set(LETTERS)
        if bad:
            raise ValueError(f"invalid Pauli letters: {sorted(bad)}")
        if self.phase_pow not in (0, 1, 2, 3):
            raise ValueError("phase_pow must be in 0..3")

    @property
    def phase(self) -> complex:
        return PHASES[self.phase_pow]

    @property
    def weight(self) -> int:
        return sum(1 for c in self.letters if c != "I")

    def is_identity(self) -> bool:
        return self.weight == 0

    def masks(self) -> tuple[int, int]:
        """Return (x, z) bitmasks with bit j = qubit j."""
        x = z = 0
        for j, c in enumerate(self.letters):
            xb, zb = _XZ[c]
            x |= xb << j
            z |= zb << j
        return x, z

    def matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix (qubit 0 = most significant factor)."""
        out = np.array([[self.phase]], dtype=complex)
        for c in self.letters:
            out = np.kron(out, _SINGLE[c])
        return out

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_product(self, other)

    def __str__(self):
        prefix = {0: "", 1: "i", 2: "-", 3: "-i"}[self.phase_pow]
        return prefix + self.letters


def parse_pauli(text: str, n: int) -> PauliString:
    """Parse a plain letter string like "XIZ" into a phase +1 PauliString."""
    return PauliString(n, text, 0)


def from_masks(n: int, x: int, z: int, phase_pow: int = 0) -> PauliString:
    """Build a PauliString from (x, z) bitmasks, letterwise phase convention."""
    letters = "".join(_FROM_XZ[(x >> j & 1, z >> j & 1)] for j in range(n))
    return PauliString(n, letters, phase_pow)


def pauli_product(a: PauliString, b: PauliString) -> PauliString:
    """Exact product a*b with accumulated phase."""
    if a.n != b.n:
        raise ValueError("qubit counts differ")
    xa, za = a.masks()
    xb, zb = b.masks()
    xc, zc = xa ^ xb, za ^ zb
    # i^va X^xa Z^za * i^vb X^xb Z^zb = i^(va+vb) (-1)^(za.xb) X^xc Z^zc,
    # with letterwise v = phase_pow + popcount(x & z).
    va = a.phase_pow + (xa & za).bit_count()
    vb = b.phase_pow + (xb & zb).bit_count()
    vc = va + vb + 2 * (za & xb).bit_count()
    phase_pow = (vc - (xc & zc).bit_count()) % 4
    return from_masks(a.n, xc, zc, phase_pow)


def hs_inner(a: PauliString, b: PauliString) -> float:
    """Normalized Hilbert-Schmidt inner product of two phase +1 basis Paulis."""
    if a.n != b.n:
        raise ValueError("qubit counts differ")
    if a.phase_pow != 0 or b.phase_pow != 0:
        raise ValueError("basis terms must have phase +1")
    return 1.0 if a.letters == b.letters else 0.0


def enumerate_klocal(n: int, k: int) -> list[PauliString]:
    """All non-identity Paulis on <= k of the n qubits, in lexicographic order."""
    if not 1 <= k <= n:
        raise ValueError(f"locality k={k} out of range for n={n}")
    strings = []
    for j in range(1, k + 1):
        for support in itertools.combinations(range(n), j):
            for choice in itertools.product("XYZ", repeat=j):
                letters = ["I"] * n
                for q, c in zip(support, choice):
                    letters[q] = c
                strings.append("".join(letters))
    strings.sort()
    return [PauliString(n, s) for s in strings]


def klocal_count(n: int, k: int) -> int:
    """Closed-form size of enumerate_klocal(n, k)."""
    from math import comb

    return sum(comb(n, j) * 3**j for j in range(1, k + 1))


@dataclass(frozen=True)
class HamiltonianModel:
    """A weighted sum of distinct non-identity Pauli basis terms."""

    n: int
    terms: tuple[PauliString, ...]
    coeffs: np.ndarray = field(compare=False)

    def __post_init__(self):
        if len(self.terms) < 1:
            raise ValueError("model needs at least one term")
        if len(self.terms) != len(self.coeffs):
            raise ValueError("terms/coeffs length mismatch")
        seen = set()
        for t in self.terms:
            if t.n != self.n:
                raise ValueError("term qubit count mismatch")
            if t.phase_pow != 0:
                raise ValueError("basis terms must have phase +1")
            if t.is_identity():
                raise ValueError("identity is not an allowed term")
            if t.letters in seen:
                raise ValueError(f"duplicate term {t.letters}")
            seen.add(t.letters)
        c = np.asarray(self.coeffs, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)
        c.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.terms)

    def l2_norm_sq(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    def alpha_sq(self) -> float:
        """Normalization constant squared of the exact encoded state, ||c||^2 + 1."""
        return self.l2_norm_sq() + 1.0

    def c_max(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "terms": [t.letters for t in self.terms], "coeffs": list(self.coeffs)}
        )

    @staticmethod
    def from_json(text: str) -> "HamiltonianModel":
        doc = json.loads(text)
        n = int(doc["n"])
        terms = tuple(parse_pauli(t, n) for t in doc["terms"])
        return HamiltonianModel(n, terms, np.array(doc["coeffs"], dtype=float))


def random_model(
    n: int,
    k: int,
    m: int,
    coeff_bound: float,
    seed,
    max_intersections: int | None = None,
) -> HamiltonianModel:
    """Sample a model with m distinct k-local terms and uniform coefficients.

    Coefficients are uniform on [-coeff_bound, coeff_bound].  Deterministic
    given the seed.  With ``max_intersections`` set, terms are greedily
    accepted only while every chosen term shares support with at most that
    many other chosen terms (the low-overlap regime).
    """
    if coeff_bound <= 0:
        raise ValueError("coeff_bound must be positive")
    pool = enumerate_klocal(n, k)
    if m > len(pool):
        raise ValueError(f"requested {m} terms but only {len(pool)} exist")
    rng = seed if isinstance(seed, np.random.Generator) else substream(int(seed), DOMAIN_MODEL)
    if max_intersections is None:
        idx = rng.choice(len(pool), size=m, replace=False)
        terms = tuple(pool[int(i)] for i in sorted(idx))
    else:
        order = rng.permutation(len(pool))
        chosen: list[PauliString] = []
        overlaps = []
        for i in order:
            cand = pool[int(i)]
            csup = {q for q, c in enumerate(cand.letters) if c != "I"}
            hits = [
                j
                for j, t in enumerate(chosen)
                if csup & {q for q, c in enumerate(t.letters) if c != "I"}
            ]
            if len(hits) <= max_intersections and all(
                overlaps[j] < max_intersections for j in hits
            ):
                for j in hits:
                    overlaps[j] += 1
                chosen.append(cand)
                overlaps.append(len(hits))
            if len(chosen) == m:
                break
        if len(chosen) < m:
            raise ValueError("could not satisfy the intersection constraint")
        terms = tuple(sorted(chosen, key=lambda t: t.letters))
    coeffs = rng.uniform(-coeff_bound, coeff_bound, size=m)
    return HamiltonianModel(n, terms, coeffs)
