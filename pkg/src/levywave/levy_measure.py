"""Jump (Levy) measures on the punctured real line.

A measure is either a finite list of atoms ``(z, rate)`` or a symmetric
density family.  Density families with infinite activity near zero must be
truncated at some ``eps > 0`` before they can be simulated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import (
    DivergentMoment,
    EmptyMeasure,
    InvalidMeasure,
    StillInfiniteActivity,
)

KINDS = ("discrete_atoms", "scaled_density", "truncated_density")

# relative accuracy of every moment quadrature
MOMENT_RTOL = 1e-9


class _Family:
    """A symmetric Levy density ``nu(dz) = g(|z|) dz`` (g on each half line)."""

    name: str
    required: tuple[str, ...]
    finite_activity = True

    def validate(self, params: Mapping[str, float]) -> None:
        missing = [k for k in self.required if k not in params]
        extra = [k for k in params if k not in self.required]
        if missing or extra:
            raise InvalidMeasure(
                f"{self.name}: expected parameters {self.required}, "
                f"missing {missing}, unexpected {extra}"
            )

    def half_density(self, z, params):
        raise NotImplementedError

    def moment_divergence(self, p, eps, params) -> str | None:
        return None

    def activity_infinite(self, eps, params) -> bool:
        return False

    def sample_abs(self, rng, size, eps, params):
        raise NotImplementedError


class _Laplace(_Family):
    name = "laplace"
    required = ("rate", "scale")

    def validate(self, params):
        super().validate(params)
        if params["rate"] <= 0 or params["scale"] <= 0:
            raise InvalidMeasure("laplace: rate and scale must be positive")

    def half_density(self, z, params):
        b = params["scale"]
        return params["rate"] * np.exp(-z / b) / (2.0 * b)

    def sample_abs(self, rng, size, eps, params):
        # memoryless tail: |z| given |z| >= eps is eps + Exp(b)
        return eps + rng.exponential(params["scale"], size)


class _Normal(_Family):
    name = "normal"
    required = ("rate", "scale")

    def validate(self, params):
        super().validate(params)
        if params["rate"] <= 0 or params["scale"] <= 0:
            raise InvalidMeasure("normal: rate and scale must be positive")

    def half_density(self, z, params):
        s = params["scale"]
        return params["rate"] * np.exp(-0.5 * (z / s) ** 2) / (s * math.sqrt(2 * math.pi))

    def sample_abs(self, rng, size, eps, params):
        s = params["scale"]
        if eps == 0.0:
            return np.abs(rng.normal(0.0, s, size))
        return stats.truncnorm.rvs(eps / s, np.inf, scale=s, size=size, random_state=rng)


class _TemperedStable(_Family):
    """``c |z|^(-1-alpha) exp(-lam |z|)``, infinite activity at the origin."""

    name = "tempered_stable"
    required = ("c", "alpha", "lam")
    finite_activity = False

    def validate(self, params):
        super().validate(params)
        if params["c"] <= 0 or params["lam"] <= 0:
            raise InvalidMeasure("tempered_stable: c and lam must be positive")
        if not 0.0 <= params["alpha"] < 2.0:
            raise InvalidMeasure("tempered_stable: alpha must lie in [0, 2)")

    def half_density(self, z, params):
        a = params["alpha"]
        return params["c"] * z ** (-1.0 - a) * np.exp(-params["lam"] * z)

    def moment_divergence(self, p, eps, params):
        if eps == 0.0 and p <= params["alpha"]:
            return f"|z|^{p} is not integrable at 0 against |z|^(-1-{params['alpha']})"
        return None

    def activity_infinite(self, eps, params):
        return eps == 0.0

    def sample_abs(self, rng, size, eps, params):
        a, lam = params["alpha"], params["lam"]
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(0)
        while out.size < n:
            m = max(2 * (n - out.size), 16)
            if a > 0:
                # Pareto(eps, a) proposal, accept with exp(-lam (z - eps))
                prop = eps * rng.random(m) ** (-1.0 / a)
                keep = rng.random(m) < np.exp(-lam * (prop - eps))
            else:
                prop = eps + rng.exponential(1.0 / lam, m)
                keep = rng.random(m) < eps / prop
            out = np.concatenate([out, prop[keep]])
        out = out[:n]
        return out[0] if size is None else out.reshape(size)


class _PowerLaw(_Family):
    """``c |z|^(-1-alpha)``; only usable after truncation."""

    name = "power_law"
    required = ("c", "alpha")
    finite_activity = False

    def validate(self, params):
        super().validate(params)
        if params["c"] <= 0:
            raise InvalidMeasure("power_law: c must be positive")

    def half_density(self, z, params):
        return params["c"] * z ** (-1.0 - params["alpha"])

    def moment_divergence(self, p, eps, params):
        a = params["alpha"]
        if p >= a:
            return f"tail |z|^({p}-1-{a}) is not integrable at infinity"
        if eps == 0.0:
            return f"|z|^{p} is not integrable at 0 against |z|^(-1-{a})"
        return None

    def activity_infinite(self, eps, params):
        return eps == 0.0 or params["alpha"] <= 0.0

    def sample_abs(self, rng, size, eps, params):
        return eps * rng.random(size) ** (-1.0 / params["alpha"])


FAMILIES: dict[str, _Family] = {
    f.name: f for f in (_Laplace(), _Normal(), _TemperedStable(), _PowerLaw())
}


def _half_line_integral(f, lo: float) -> float:
    """``int_lo^inf f``, split at 1 so integrable singularities at 0 converge."""
    pieces = []
    if lo < 1.0:
        pieces.append(integrate.quad(f, lo, 1.0, epsabs=0.0, epsrel=MOMENT_RTOL, limit=200)[0])
    pieces.append(
        integrate.quad(f, max(lo, 1.0), np.inf, epsabs=0.0, epsrel=MOMENT_RTOL, limit=200)[0]
    )
    return math.fsum(pieces)


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Immutable description of a jump measure nu.

    Build with :meth:`from_atoms`, :meth:`scaled_density` or
    :meth:`truncated_density`.  ``total_rate`` (activity), ``mean_jump``
    (``int z nu(dz)``) and ``m2`` are computed once at construction.
    """

    kind: str
    atoms: tuple[tuple[float, float], ...] = ()
    family: str | None = None
    params: tuple[tuple[str, float], ...] = ()
    truncation_eps: float = 0.0
    total_rate: float = field(init=False, compare=False)
    mean_jump: float = field(init=False, compare=False)
    m2: float = field(init=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidMeasure(f"unknown measure kind {self.kind!r}")
        if self.kind == "discrete_atoms":
            if not self.atoms:
                raise EmptyMeasure("no atoms: nu == 0 violates m2 > 0")
            for z, rate in self.atoms:
                if z == 0 or not math.isfinite(z):
                    raise InvalidMeasure(f"atom location must be finite and nonzero, got {z}")
                if not rate > 0:
                    raise InvalidMeasure(f"atom rate must be positive, got {rate}")
            rate = math.fsum(r for _, r in self.atoms)
            mean = math.fsum(z * r for z, r in self.atoms)
        else:
            fam = FAMILIES.get(self.family)
            if fam is None:
                raise InvalidMeasure(f"unknown density family {self.family!r}")
            fam.validate(self.param_dict)
            if self.truncation_eps < 0:
                raise InvalidMeasure("truncation_eps must be >= 0")
            if self.kind == "scaled_density" and (
                self.truncation_eps != 0.0 or not fam.finite_activity
            ):
                raise InvalidMeasure(
                    "scaled_density needs a finite-activity family and no truncation"
                )
            if fam.activity_infinite(self.truncation_eps, self.param_dict):
                rate = math.inf
            else:
                rate = 2.0 * _half_line_integral(
                    lambda z: fam.half_density(z, self.param_dict), self.truncation_eps
                )
            mean = 0.0  # every density family is symmetric
        object.__setattr__(self, "total_rate", rate)
        object.__setattr__(self, "mean_jump", mean)
        object.__setattr__(self, "m2", moment(self, 2))
        if not self.m2 > 0:
            raise EmptyMeasure("m2 = 0")

    # constructors -------------------------------------------------------

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float]]) -> "LevyMeasureSpec":
        return cls("discrete_atoms", atoms=tuple((float(z), float(r)) for z, r in atoms))

    @classmethod
    def scaled_density(cls, family: str, total_rate: float, **params) -> "LevyMeasureSpec":
        """``total_rate`` times a symmetric probability density (laplace, normal)."""
        params = {"rate": float(total_rate), **{k: float(v) for k, v in params.items()}}
        return cls("scaled_density", family=family, params=tuple(sorted(params.items())))

    @classmethod
    def truncated_density(cls, family: str, eps: float, **params) -> "LevyMeasureSpec":
        params = {k: float(v) for k, v in params.items()}
        return cls(
            "truncated_density",
            family=family,
            params=tuple(sorted(params.items())),
            truncation_eps=float(eps),
        )

    # accessors ----------------------------------------------------------

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)

    @property
    def finite_activity(self) -> bool:
        return math.isfinite(self.total_rate)

    @property
    def is_centered(self) -> bool:
        return self.mean_jump == 0.0

    @property
    def name(self) -> str:
        if self.kind == "discrete_atoms":
            return "atoms[" + ",".join(f"{z:+g}:{r:g}" for z, r in self.atoms) + "]"
        args = ",".join(f"{k}={v:g}" for k, v in self.params)
        tail = f";eps={self.truncation_eps:g}" if self.truncation_eps else ""
        return f"{self.family}({args}{tail})"

    def to_config(self) -> dict:
        if self.kind == "discrete_atoms":
            return {"kind": self.kind, "atoms": [[z, r] for z, r in self.atoms]}
        d = {"kind": self.kind, "family": self.family}
        params = self.param_dict
        if self.kind == "scaled_density":
            d["total_rate"] = params.pop("rate")
        else:
            d["eps"] = self.truncation_eps
        d.update(params)
        return d

    @classmethod
    def from_config(cls, cfg: Mapping) -> "LevyMeasureSpec":
        cfg = dict(cfg)
        kind = cfg.pop("kind", None)
        if kind == "discrete_atoms":
            atoms = cfg.pop("atoms", None)
            if cfg:
                raise InvalidMeasure(f"unexpected fields {sorted(cfg)}")
            if not isinstance(atoms, (list, tuple)):
                raise InvalidMeasure("atoms must be a list of [z, rate] pairs")
            return cls.from_atoms([tuple(a) for a in atoms])
        if kind == "scaled_density":
            family = cfg.pop("family", None)
            rate = cfg.pop("total_rate", None)
            if rate is None:
                raise InvalidMeasure("scaled_density needs total_rate")
            return cls.scaled_density(family, rate, **cfg)
        if kind == "truncated_density":
            family = cfg.pop("family", None)
            eps = cfg.pop("eps", 0.0)
            return cls.truncated_density(family, eps, **cfg)
        raise InvalidMeasure(f"unknown measure kind {kind!r}")


def moment(spec: LevyMeasureSpec, p: float) -> float:
    """Absolute moment ``m_p = int |z|^p nu(dz)``."""
    if p < 1:
        raise ValueError(f"moment order must be >= 1, got {p}")
    if spec.kind == "discrete_atoms":
        return math.fsum(r * abs(z) ** p for z, r in spec.atoms)
    fam = FAMILIES[spec.family]
    params = spec.param_dict
    why = fam.moment_divergence(p, spec.truncation_eps, params)
    if why is not None:
        raise DivergentMoment(f"m_{p} = inf for {spec.name}: {why}")
    return 2.0 * _half_line_integral(
        lambda z: z**p * fam.half_density(z, params), spec.truncation_eps
    )


def moment_is_finite(spec: LevyMeasureSpec, p: float) -> bool:
    try:
        return math.isfinite(moment(spec, p))
    except DivergentMoment:
        return False


def sample_jump(spec: LevyMeasureSpec, rng: np.random.Generator, size=None):
    """Draw jump sizes from the normalized mark law ``nu / nu(R_0)``."""
    if not spec.finite_activity:
        raise StillInfiniteActivity(f"{spec.name} has infinite activity; truncate it first")
    if spec.kind == "discrete_atoms":
        zs = np.array([z for z, _ in spec.atoms])
        if zs.size == 1:
            return zs[0] if size is None else np.full(size, zs[0])
        w = np.array([r for _, r in spec.atoms])
        return rng.choice(zs, size=size, p=w / w.sum())
    fam = FAMILIES[spec.family]
    mag = fam.sample_abs(rng, size, spec.truncation_eps, spec.param_dict)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    out = sign * mag
    return float(out) if size is None else out


def truncate(spec: LevyMeasureSpec, eps: float) -> tuple[LevyMeasureSpec, float]:
    """Drop jumps with ``|z| < eps``.

    Returns the truncated measure and the discarded variance
    ``int_{|z|<eps} z^2 nu(dz)``.  The small jumps are not replaced by a
    Gaussian component.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if spec.kind == "discrete_atoms":
        kept = [(z, r) for z, r in spec.atoms if abs(z) >= eps]
        dropped = math.fsum(r * z * z for z, r in spec.atoms if abs(z) < eps)
        if not kept:
            raise EmptyMeasure(f"every atom has |z| < {eps}")
        if len(kept) == len(spec.atoms):
            return spec, 0.0
        return LevyMeasureSpec.from_atoms(kept), dropped

    fam = FAMILIES[spec.family]
    params = spec.param_dict
    new_eps = max(eps, spec.truncation_eps)
    if fam.activity_infinite(new_eps, params):
        raise StillInfiniteActivity(f"{spec.name} still has infinite activity at eps={eps}")
    if new_eps == spec.truncation_eps:
        return spec, 0.0
    dropped = 2.0 * integrate.quad(
        lambda z: z * z * fam.half_density(z, params),
        spec.truncation_eps,
        new_eps,
        epsabs=0.0,
        epsrel=MOMENT_RTOL,
        limit=200,
    )[0]
    out = LevyMeasureSpec(
        "truncated_density", family=spec.family, params=spec.params, truncation_eps=new_eps
    )
    if not math.isfinite(out.total_rate):
        raise StillInfiniteActivity(f"{spec.name} still has infinite activity at eps={eps}")
    return out, dropped


def symmetric_unit_atoms() -> LevyMeasureSpec:
    """``nu = delta_{+1} + delta_{-1}``: m2 = 2, zero mean jump."""
    return LevyMeasureSpec.from_atoms([(1.0, 1.0), (-1.0, 1.0)])
