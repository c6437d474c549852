"""Deterministic black-box maps R^m -> R^n with batched evaluation."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .sampling import DomainPredicate


def worker_count() -> int:
    """Workers for per-point evaluation; ``CONEDERIV_THREADS`` (0 = auto, unset = 1)."""
    raw = os.environ.get("CONEDERIV_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 0:
        raise ValueError("CONEDERIV_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


@dataclass(frozen=True)
class BlackBoxFn:
    """A pure function ``func``; with ``vectorized`` it maps ``(N, m)`` to ``(N, n)``."""

    func: Callable
    m: int
    n: int = 1
    name: str = "f"
    vectorized: bool = False
    domain: Optional[DomainPredicate] = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.m)
        if self.vectorized:
            return np.asarray(self.func(x[None, :]), dtype=float).reshape(self.n)
        return np.asarray(self.func(x), dtype=float).reshape(self.n)

    def many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.m)
        if X.shape[0] == 0:
            return np.zeros((0, self.n))
        if self.vectorized:
            return np.asarray(self.func(X), dtype=float).reshape(X.shape[0], self.n)
        workers = worker_count()
        if workers > 1:
            # map() returns results in submission order, independent of completion order.
            with ThreadPoolExecutor(max_workers=workers) as pool:
                vals = list(pool.map(self.__call__, X))
        else:
            vals = [self(x) for x in X]
        return np.array(vals).reshape(X.shape[0], self.n)


def compose(g: BlackBoxFn, f: BlackBoxFn, name: str | None = None) -> BlackBoxFn:
    """``g o f``."""
    if g.m != f.n:
        raise ValueError(f"cannot compose: g expects {g.m} inputs, f gives {f.n}")

    def gf(X):
        return g.many(f.many(X))

    return BlackBoxFn(gf, f.m, g.n, name or f"{g.name}∘{f.name}", vectorized=True, domain=f.domain)


def from_callable(func: Callable, m: int, n: int = 1, name: str = "f", domain=None) -> BlackBoxFn:
    return BlackBoxFn(func, m, n, name, vectorized=False, domain=domain)
