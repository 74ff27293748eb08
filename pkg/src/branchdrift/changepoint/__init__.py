"""Change-point detection on categorical choice sequences.

Public entry points: encode / median_gamma / rbf_segment_cost for the cost
side, pelt / exact_dp for the search side. PELT runs on the compiled
kernel when the extension built, otherwise on the pure-Python backend;
``BRANCHDRIFT_BACKEND=python|c`` forces a choice. exact_dp is the
verification oracle and always runs in pure Python.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Optional

from .costs import (EncodedSequence, GramRbfCost, RbfCost, encode,
                    median_gamma, naive_rbf_cost, resolve_gamma)
from .search import OracleBoundError, exact_dp_py, pelt_py

try:
    from . import _pelt_c
    HAVE_COMPILED = True
except ImportError:
    _pelt_c = None
    HAVE_COMPILED = False

__all__ = [
    "EncodedSequence", "Segmentation", "OracleBoundError",
    "encode", "median_gamma", "rbf_segment_cost",
    "pelt", "exact_dp", "sweep_penalty",
    "HAVE_COMPILED", "active_backend",
    "RbfCost", "GramRbfCost", "naive_rbf_cost",
]

_BACKEND_ENV = "BRANCHDRIFT_BACKEND"


def active_backend(override: Optional[str] = None) -> str:
    """Resolve which PELT backend to use: 'c' or 'python'."""
    choice = override or os.environ.get(_BACKEND_ENV) or \
        ("c" if HAVE_COMPILED else "python")
    if choice not in ("c", "python"):
        raise ValueError(f"unknown backend {choice!r} (use 'c' or 'python')")
    if choice == "c" and not HAVE_COMPILED:
        raise RuntimeError("compiled kernel requested but not built; "
                           "reinstall with a C compiler or set "
                           f"{_BACKEND_ENV}=python")
    return choice


@dataclass(frozen=True)
class Segmentation:
    """Breakpoints (strictly increasing, exclusive of 0 and n) plus the
    penalized total cost: sum of segment costs + penalty * (segments-1)."""

    n: int
    breakpoints: tuple
    total_cost: float
    penalty: float
    min_size: int
    gamma: float
    backend: str = "python"

    @property
    def segment_count(self) -> int:
        return len(self.breakpoints) + 1

    def segments(self):
        """Half-open (start, end) index pairs covering [0, n)."""
        edges = (0,) + tuple(self.breakpoints) + (self.n,)
        return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]


def rbf_segment_cost(enc: EncodedSequence, a: int, b: int,
                     gamma: Optional[float] = None) -> float:
    """Cost of the segment [a, b); zero iff all points are identical."""
    return RbfCost(enc, gamma).cost(a, b)


def pelt(enc: EncodedSequence, penalty: float, min_size: int = 2,
         gamma: Optional[float] = None, backend: Optional[str] = None) -> Segmentation:
    """Penalized change-point search with PELT pruning."""
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    resolved = resolve_gamma(enc, gamma)
    chosen = active_backend(backend)
    n = enc.n
    if n == 0:
        return Segmentation(0, (), 0.0, penalty, min_size, resolved, chosen)
    if n < min_size:
        cost = RbfCost(enc, resolved)
        return Segmentation(n, (), cost.cost(0, n), penalty, min_size,
                            resolved, chosen)
    if chosen == "c":
        bkps, total = _pelt_c.pelt_categorical(enc.labels, enc.k, resolved,
                                               penalty, min_size)
    else:
        bkps, total = pelt_py(RbfCost(enc, resolved), n, penalty, min_size)
    return Segmentation(n, tuple(int(b) for b in bkps), float(total),
                        penalty, min_size, resolved, chosen)


def exact_dp(enc: EncodedSequence, penalty: float, min_size: int = 2,
             gamma: Optional[float] = None, max_n: Optional[int] = 2000) -> Segmentation:
    """Unpruned O(n^2) optimum; the oracle pelt is verified against."""
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    resolved = resolve_gamma(enc, gamma)
    n = enc.n
    if n == 0:
        return Segmentation(0, (), 0.0, penalty, min_size, resolved, "python")
    bkps, total = exact_dp_py(RbfCost(enc, resolved), n, penalty, min_size,
                              max_n=max_n)
    return Segmentation(n, tuple(int(b) for b in bkps), float(total),
                        penalty, min_size, resolved, "python")


def sweep_penalty(enc: EncodedSequence, penalties: Iterable[float],
                  min_size: int = 2, gamma: Optional[float] = None,
                  backend: Optional[str] = None):
    """Segmentations for a list of penalties (same gamma throughout)."""
    resolved = resolve_gamma(enc, gamma)
    return [pelt(enc, p, min_size=min_size, gamma=resolved, backend=backend)
            for p in penalties]
