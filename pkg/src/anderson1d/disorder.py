"""Potential distributions, seeded sampling and finite-volume Hamiltonians."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

__all__ = [
    "Bernoulli",
    "Uniform",
    "Discrete",
    "Atomized",
    "DisorderSpec",
    "Realization",
    "TridiagOperator",
    "sample_realization",
    "build_hamiltonian",
    "spectrum_hull",
    "parse_family",
    "format_family",
]

_WEIGHT_TOL = 1e-12


# Every family maps two independent uniforms (u1, u2) per site to a value.
# u1 drives the base draw, u2 is reserved for atom placement, so nested
# families stay exact without extra stream positions.


@dataclass(frozen=True)
class Bernoulli:
    """Takes ``hi_value`` with probability ``p`` and 0 otherwise."""

    p: float
    hi_value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"bernoulli p={self.p} outside [0, 1]")

    def quantile(self, u1, u2):
        return np.where(u1 < self.p, self.hi_value, 0.0)

    def atoms(self):
        return _merge_atoms([(0.0, 1.0 - self.p), (self.hi_value, self.p)])

    def intervals(self):
        return []

    def prob_abs_le(self, eta):
        return sum(w for v, w in self.atoms() if abs(v) <= eta)

    def restrict(self, eta):
        return _restrict_atomic(self, eta)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi >= self.lo:
            raise ValueError(f"uniform needs lo <= hi, got [{self.lo}, {self.hi}]")

    def quantile(self, u1, u2):
        return self.lo + (self.hi - self.lo) * u1

    def atoms(self):
        return [(self.lo, 1.0)] if self.hi == self.lo else []

    def intervals(self):
        return [] if self.hi == self.lo else [(self.lo, self.hi)]

    def prob_abs_le(self, eta):
        if self.hi == self.lo:
            return 1.0 if abs(self.lo) <= eta else 0.0
        a, b = max(self.lo, -eta), min(self.hi, eta)
        return max(b - a, 0.0) / (self.hi - self.lo)

    def restrict(self, eta):
        if self.prob_abs_le(eta) <= 0.0:
            raise ValueError(f"event |V| <= {eta} has probability zero")
        if self.hi == self.lo:
            return self
        return Uniform(max(self.lo, -eta), min(self.hi, eta))


@dataclass(frozen=True)
class Discrete:
    values: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.values) != len(self.weights) or not self.values:
            raise ValueError("discrete needs equally many values and weights")
        if any(not 0.0 <= w <= 1.0 for w in self.weights):
            raise ValueError("discrete weights must lie in [0, 1]")
        if abs(math.fsum(self.weights) - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"discrete weights sum to {math.fsum(self.weights)}, not 1")

    def quantile(self, u1, u2):
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u1, side="right")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def atoms(self):
        return _merge_atoms(zip(self.values, self.weights))

    def intervals(self):
        return []

    def prob_abs_le(self, eta):
        return math.fsum(w for v, w in zip(self.values, self.weights) if abs(v) <= eta)

    def restrict(self, eta):
        return _restrict_atomic(self, eta)


@dataclass(frozen=True)
class Atomized:
    """``base`` with an extra atom of mass ``atom_mass`` placed at 0."""

    base: "Family"
    atom_mass: float

    def __post_init__(self):
        if not 0.0 < self.atom_mass < 1.0:
            raise ValueError(f"atom_mass={self.atom_mass} outside (0, 1)")

    def quantile(self, u1, u2):
        m = self.atom_mass
        inner_u2 = np.clip((u2 - m) / (1.0 - m), 0.0, np.nextafter(1.0, 0.0))
        return np.where(u2 < m, 0.0, self.base.quantile(u1, inner_u2))

    def atoms(self):
        m = self.atom_mass
        return _merge_atoms([(0.0, m)] + [(v, (1 - m) * w) for v, w in self.base.atoms()])

    def intervals(self):
        return self.base.intervals()

    def prob_abs_le(self, eta):
        m = self.atom_mass
        return m + (1.0 - m) * self.base.prob_abs_le(eta)

    def restrict(self, eta):
        inner = self.base.prob_abs_le(eta)
        if inner <= 0.0:
            return Discrete((0.0,), (1.0,))
        m = self.atom_mass
        mass = m / (m + (1.0 - m) * inner)
        if mass >= 1.0:
            return Discrete((0.0,), (1.0,))
        return Atomized(self.base.restrict(eta), mass)


Family = Union[Bernoulli, Uniform, Discrete, Atomized]


def _merge_atoms(pairs):
    merged = {}
    for v, w in pairs:
        if w > 0.0:
            merged[float(v)] = merged.get(float(v), 0.0) + float(w)
    return sorted(merged.items())


def _restrict_atomic(family, eta):
    kept = [(v, w) for v, w in family.atoms() if abs(v) <= eta]
    total = math.fsum(w for _, w in kept)
    if total <= 0.0:
        raise ValueError(f"event |V| <= {eta} has probability zero")
    return Discrete(tuple(v for v, _ in kept), tuple(w / total for _, w in kept))


def support_intervals(family):
    """Support as sorted closed intervals (points are degenerate intervals)."""
    parts = [(v, v) for v, _ in family.atoms()] + list(family.intervals())
    return _merge_intervals(parts)


def _merge_intervals(parts):
    out = []
    for lo, hi in sorted(parts):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def support_radius(family):
    return max(max(abs(lo), abs(hi)) for lo, hi in support_intervals(family))


@dataclass(frozen=True)
class DisorderSpec:
    """Law of the i.i.d. potential: a family, a coupling ``a`` and a seed."""

    family: Family
    coupling: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.coupling >= 0.0:
            raise ValueError(f"coupling must be >= 0, got {self.coupling}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def support_radius(self):
        """Bound on |V_x| before coupling."""
        return support_radius(self.family)

    @property
    def coupled_radius(self):
        return self.coupling * self.support_radius

    def atom_mass_at_zero(self):
        return dict(self.family.atoms()).get(0.0, 0.0)

    def prob_abs_le(self, eta):
        return self.family.prob_abs_le(eta)

    def with_coupling(self, a):
        return replace(self, coupling=float(a))

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def __str__(self):
        return format_family(self.family)


@dataclass(frozen=True)
class Realization:
    """Coupled potential values ``a * V_x`` on the sites ``lo..hi``."""

    lo: int
    hi: int
    values: np.ndarray = field(repr=False)
    seed: int = 0
    replica: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.size != self.hi - self.lo + 1:
            raise ValueError("values length does not match the window")

    @property
    def sites(self):
        return np.arange(self.lo, self.hi + 1)

    def index(self, site):
        if not self.lo <= site <= self.hi:
            raise ValueError(f"site {site} outside window [{self.lo}, {self.hi}]")
        return site - self.lo

    def sub(self, lo, hi):
        """The same values restricted to [lo, hi]."""
        a, b = self.index(lo), self.index(hi)
        return Realization(lo, hi, self.values[a:b + 1], self.seed, self.replica)


@dataclass(frozen=True)
class TridiagOperator:
    """Dirichlet restriction of H to a window, hopping fixed to 1."""

    lo: int
    hi: int
    diagonal: np.ndarray = field(repr=False)
    shift: float = 0.0

    def __post_init__(self):
        diagonal = np.array(self.diagonal, dtype=float)
        diagonal.setflags(write=False)
        object.__setattr__(self, "diagonal", diagonal)
        if diagonal.size != self.hi - self.lo + 1 or diagonal.size == 0:
            raise ValueError("diagonal length does not match the window")

    @property
    def size(self):
        return self.diagonal.size

    def index(self, site):
        if not self.lo <= site <= self.hi:
            raise ValueError(f"site {site} outside window [{self.lo}, {self.hi}]")
        return site - self.lo

    def apply(self, psi):
        psi = np.asarray(psi, dtype=float)
        out = self.diagonal * psi
        out[:-1] += psi[1:]
        out[1:] += psi[:-1]
        return out

    def dense(self):
        n = self.size
        return np.diag(self.diagonal) + np.eye(n, k=1) + np.eye(n, k=-1)

    def gershgorin(self):
        """(lower, upper) edges of the union of Gershgorin discs."""
        n = self.size
        r = np.full(n, 2.0)
        if n >= 1:
            r[0] = r[-1] = 1.0 if n > 1 else 0.0
        return float(np.min(self.diagonal - r)), float(np.max(self.diagonal + r))

    def norm_bound(self):
        return float(np.max(np.abs(self.diagonal))) + 2.0


def _stream_key(seed, replica, half):
    ss = np.random.SeedSequence([int(seed), int(replica), half])
    return ss.generate_state(2, np.uint64)


def _raw_half(key, first, count):
    # two uint64 words per site, four words per Philox block
    bitgen = np.random.Philox(key=key)
    bitgen.advance(first // 2)
    raw = bitgen.random_raw(2 * count + 2)
    off = 2 * (first % 2)
    return raw[off:off + 2 * count].reshape(count, 2)


def site_uniforms(seed, replica, lo, hi):
    """Uniforms in [0, 1), shape (hi - lo + 1, 2), a pure function of each site.

    Sites >= 0 read their own block of a Philox stream keyed by
    (seed, replica, 0); sites < 0 mirror into a second stream.
    """
    n = hi - lo + 1
    raw = np.empty((n, 2), dtype=np.uint64)
    if hi >= 0:
        start = max(lo, 0)
        raw[start - lo:] = _raw_half(_stream_key(seed, replica, 0), start, hi - start + 1)
    if lo < 0:
        stop = min(hi, -1)
        # site s < 0 lives at position -s - 1 of the mirror stream
        block = _raw_half(_stream_key(seed, replica, 1), -stop - 1, stop - lo + 1)
        raw[: stop - lo + 1] = block[::-1]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def sample_realization(spec, lo, hi, replica=0, restrict=None):
    """Sample ``a * V_x`` on the sites ``lo..hi``.

    ``restrict`` optionally maps a sub-window ``(lo, hi, eta)`` to the
    conditional law given ``|V_x| <= eta`` there (used by rare-event
    estimators); other sites keep the unconditioned law.
    """
    lo, hi = int(lo), int(hi)
    if hi < lo:
        raise ValueError(f"empty window [{lo}, {hi}]")
    u = site_uniforms(spec.seed, replica, lo, hi)
    values = spec.family.quantile(u[:, 0], u[:, 1])
    if restrict is not None:
        rlo, rhi, eta = restrict
        cond = spec.family.restrict(eta)
        a, b = max(rlo, lo) - lo, min(rhi, hi) - lo + 1
        if b > a:
            values[a:b] = cond.quantile(u[a:b, 0], u[a:b, 1])
    values = spec.coupling * np.asarray(values, dtype=float)
    return Realization(lo, hi, values, seed=spec.seed, replica=replica)


def build_hamiltonian(r, shift=0.0):
    return TridiagOperator(r.lo, r.hi, r.values + shift, shift=float(shift))


def spectrum_hull(spec):
    """[-2, 2] + a * supp(V_0), as a list of disjoint closed intervals."""
    a = spec.coupling
    parts = [(a * lo - 2.0, a * hi + 2.0) for lo, hi in support_intervals(spec.family)]
    return _merge_intervals(parts)


# -- text form ---------------------------------------------------------------

_FAMILIES = {
    "bernoulli": Bernoulli,
    "uniform": Uniform,
    "discrete": Discrete,
    "atomized": Atomized,
}


def format_family(family):
    if isinstance(family, Bernoulli):
        return f"bernoulli(p={family.p!r}, hi_value={family.hi_value!r})"
    if isinstance(family, Uniform):
        return f"uniform(lo={family.lo!r}, hi={family.hi!r})"
    if isinstance(family, Discrete):
        return f"discrete(values={list(family.values)!r}, weights={list(family.weights)!r})"
    if isinstance(family, Atomized):
        return f"atomized(base={format_family(family.base)}, atom_mass={family.atom_mass!r})"
    raise TypeError(f"unknown family {family!r}")


def parse_family(text):
    """Parse strings like ``atomized(base=uniform(lo=0, hi=1), atom_mass=0.2)``."""
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ValueError(f"cannot parse disorder family {text!r}") from exc
    return _build_family(node)


def _build_family(node):
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise ValueError("disorder family must be a call like uniform(lo=0, hi=1)")
    name = node.func.id
    if name not in _FAMILIES:
        raise ValueError(f"unknown disorder family {name!r}")
    if node.args:
        raise ValueError(f"{name}: use keyword arguments only")
    kwargs = {}
    for kw in node.keywords:
        if isinstance(kw.value, ast.Call):
            kwargs[kw.arg] = _build_family(kw.value)
        else:
            try:
                value = ast.literal_eval(kw.value)
            except ValueError as exc:
                raise ValueError(f"{name}: bad value for {kw.arg}") from exc
            kwargs[kw.arg] = tuple(value) if isinstance(value, list) else value
    try:
        return _FAMILIES[name](**kwargs)
    except TypeError as exc:
        raise ValueError(f"{name}: {exc}") from exc
