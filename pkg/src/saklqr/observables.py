"""Lifting dictionaries Psi(x, u) and their analytic Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import pdist

KINDS = ("Raw", "Poly2", "Poly3", "RBF", "Fourier", "Combined")
NX = 4
NU = 6
_CUBIC = tuple(combinations_with_replacement(range(NX), 3))


@dataclass(frozen=True)
class Dictionary:
    """Observable basis over the joint point z = (x, u).

    RBF and Fourier features act on ``z / scale``; polynomial features act on
    raw coordinates.
    """

    kind: str
    rbf_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, NX + NU)))
    rbf_width: float = 1.0
    fourier_freqs: np.ndarray = field(default_factory=lambda: np.zeros((0, NX + NU)))
    include_raw: bool = True
    scale: np.ndarray = field(default_factory=lambda: np.ones(NX + NU))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dictionary kind {self.kind!r}; expected one of {KINDS}")
        centers = np.asarray(self.rbf_centers, dtype=float).reshape(-1, NX + NU)
        freqs = np.asarray(self.fourier_freqs, dtype=float).reshape(-1, NX + NU)
        scale = np.asarray(self.scale, dtype=float).reshape(NX + NU)
        object.__setattr__(self, "rbf_centers", centers)
        object.__setattr__(self, "fourier_freqs", freqs)
        object.__setattr__(self, "scale", scale)
        if np.any(scale <= 0):
            raise ValueError("scale entries must be positive")
        if self.kind in ("RBF", "Combined"):
            if len(centers) == 0:
                raise ValueError(f"{self.kind} dictionary needs RBF centers")
            if not self.rbf_width > 0:
                raise ValueError("rbf_width must be positive")
            if len(centers) > 1 and np.min(pdist(centers / scale)) <= 0:
                raise ValueError("RBF centers must be pairwise distinct")
        if self.kind == "Fourier" and len(freqs) == 0:
            raise ValueError("Fourier dictionary needs frequency vectors")
        if self.dim <= NX:
            raise ValueError("dictionary must lift: M > state dimension")

    @property
    def blocks(self) -> list[tuple[str, int]]:
        """Declared block order as (name, width)."""
        out = []
        if self.include_raw:
            out += [("x", NX), ("u", NU)]
        if self.kind in ("Poly2", "Poly3", "Combined"):
            out += [("x^2", NX), ("u^2", NU), ("x*u", NX * NU)]
        if self.kind == "Poly3":
            out.append(("x^3", len(_CUBIC)))
        if self.kind in ("RBF", "Combined"):
            out.append(("rbf", len(self.rbf_centers)))
        if self.kind == "Fourier":
            out += [("sin", len(self.fourier_freqs)), ("cos", len(self.fourier_freqs))]
        return out

    @property
    def dim(self) -> int:
        return sum(w for _, w in self.blocks)

    def block_slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for name, width in self.blocks:
            out[name] = slice(start, start + width)
            start += width
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rbf_centers": self.rbf_centers.tolist(),
            "rbf_width": float(self.rbf_width),
            "fourier_freqs": self.fourier_freqs.tolist(),
            "include_raw": bool(self.include_raw),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dictionary":
        return cls(kind=d["kind"], rbf_centers=np.array(d["rbf_centers"], dtype=float),
                   rbf_width=d["rbf_width"], fourier_freqs=np.array(d["fourier_freqs"], dtype=float),
                   include_raw=d["include_raw"], scale=np.array(d["scale"], dtype=float))


def build_dictionary(kind: str, x_samples, u_samples, n_centers: int = 10,
                     n_freqs: int = 8, seed: int = 0, include_raw: bool = True) -> Dictionary:
    """Data-driven construction: k-means RBF centers, median-distance width,
    random Fourier projections; all deterministic in ``seed``."""
    z = np.hstack([np.asarray(x_samples, dtype=float), np.asarray(u_samples, dtype=float)])
    scale = np.std(z, axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    centers = np.zeros((0, NX + NU))
    width = 1.0
    freqs = np.zeros((0, NX + NU))
    if kind in ("RBF", "Combined"):
        zs = z / scale
        rng = np.random.default_rng(seed)
        cs, _ = kmeans2(zs, n_centers, seed=rng, minit="++")
        cs = np.unique(cs, axis=0)
        if len(cs) < n_centers:
            raise ValueError(f"k-means produced only {len(cs)} distinct centers")
        centers = cs * scale
        width = float(np.median(pdist(cs)))
    if kind == "Fourier":
        rng = np.random.default_rng(seed)
        freqs = 0.5 * rng.standard_normal((n_freqs, NX + NU))
    return Dictionary(kind=kind, rbf_centers=centers, rbf_width=width,
                      fourier_freqs=freqs, include_raw=include_raw, scale=scale)


def _check(x, u):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if x.shape[1] != NX or u.shape[1] != NU or x.shape[0] != u.shape[0]:
        raise ValueError(f"expected x rows of {NX} and u rows of {NU}, got {x.shape}, {u.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite input to lift")
    return x, u


def lift_many(x, u, d: Dictionary) -> np.ndarray:
    """Row-wise lift of (n, 4) states and (n, 6) inputs into (n, M)."""
    x, u = _check(x, u)
    n = x.shape[0]
    parts = []
    for name, _ in d.blocks:
        if name == "x":
            parts.append(x)
        elif name == "u":
            parts.append(u)
        elif name == "x^2":
            parts.append(x**2)
        elif name == "u^2":
            parts.append(u**2)
        elif name == "x*u":
            parts.append((x[:, :, None] * u[:, None, :]).reshape(n, NX * NU))
        elif name == "x^3":
            parts.append(np.stack([x[:, a] * x[:, b] * x[:, c] for a, b, c in _CUBIC], axis=1))
        elif name == "rbf":
            zs = np.hstack([x, u]) / d.scale
            cs = d.rbf_centers / d.scale
            sq = ((zs[:, None, :] - cs[None, :, :]) ** 2).sum(axis=2)
            parts.append(np.exp(-sq / d.rbf_width**2))
        elif name == "sin":
            parts.append(np.sin((np.hstack([x, u]) / d.scale) @ d.fourier_freqs.T))
        elif name == "cos":
            parts.append(np.cos((np.hstack([x, u]) / d.scale) @ d.fourier_freqs.T))
    return np.hstack(parts)


def lift(x, u, d: Dictionary) -> np.ndarray:
    """Lifted vector Psi(x, u) of length ``d.dim``."""
    return lift_many(x, u, d)[0]


def jacobians(x, u, d: Dictionary) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (dPsi/dx, dPsi/du) with shapes (M, 4) and (M, 6)."""
    x, u = _check(x, u)
    x, u = x[0], u[0]
    jx_parts, ju_parts = [], []
    for name, width in d.blocks:
        jx = np.zeros((width, NX))
        ju = np.zeros((width, NU))
        if name == "x":
            jx = np.eye(NX)
        elif name == "u":
            ju = np.eye(NU)
        elif name == "x^2":
            jx = np.diag(2.0 * x)
        elif name == "u^2":
            ju = np.diag(2.0 * u)
        elif name == "x*u":
            for i in range(NX):
                for j in range(NU):
                    jx[i * NU + j, i] = u[j]
                    ju[i * NU + j, j] = x[i]
        elif name == "x^3":
            for row, mono in enumerate(_CUBIC):
                for pos in range(3):
                    rest = mono[:pos] + mono[pos + 1:]
                    jx[row, mono[pos]] += x[rest[0]] * x[rest[1]]
        elif name == "rbf":
            z = np.concatenate([x, u])
            diff = (z - d.rbf_centers) / d.scale
            phi = np.exp(-(diff**2).sum(axis=1) / d.rbf_width**2)
            grad = -2.0 * phi[:, None] * diff / (d.scale * d.rbf_width**2)
            jx, ju = grad[:, :NX], grad[:, NX:]
        elif name in ("sin", "cos"):
            z = np.concatenate([x, u]) / d.scale
            arg = d.fourier_freqs @ z
            fac = np.cos(arg) if name == "sin" else -np.sin(arg)
            grad = fac[:, None] * d.fourier_freqs / d.scale
            jx, ju = grad[:, :NX], grad[:, NX:]
        jx_parts.append(jx)
        ju_parts.append(ju)
    return np.vstack(jx_parts), np.vstack(ju_parts)
