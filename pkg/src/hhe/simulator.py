"""Exact Monte Carlo simulation of the finite household epidemic.

Each infective draws (X_G, X_L) once, turns every local contact global with
probability p, sends the remaining local contacts to housemates and the
global ones to uniformly chosen members of the whole population. Only the
final state is simulated; it does not depend on the order in which
infectives are processed.
"""

from __future__ import annotations

import csv
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .contact_models import (
    Constant,
    ContactModel,
    Gamma,
    IndependentBinomial,
    IndependentPoisson,
    JointTable,
    MixedPoisson,
    SwappedModel,
)
from .gontcharoff import Mode

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class _Encoded:
    kind: int
    ip: np.ndarray
    fp: np.ndarray
    tg: np.ndarray
    tl: np.ndarray
    tcum: np.ndarray
    p: float

    def args(self):
        return self.kind, self.ip, self.fp, self.tg, self.tl, self.tcum


def encode_model(model: ContactModel, p: float = 0.0) -> _Encoded:
    """Flatten a model (and any swaps, composed with p) for the compiled kernels."""
    keep = 1.0 - p
    while isinstance(model, SwappedModel):
        keep *= 1.0 - model.p
        model = model.base
    ip = np.zeros(4, dtype=np.int64)
    fp = np.zeros(6, dtype=np.float64)
    tg = np.zeros(1, dtype=np.int64)
    tl = np.zeros(1, dtype=np.int64)
    tcum = np.ones(1, dtype=np.float64)
    if isinstance(model, Constant):
        kind = 0
        ip[:2] = model.g, model.l
    elif isinstance(model, IndependentPoisson):
        kind = 1
        fp[:2] = model.lambda_g, model.lambda_l
    elif isinstance(model, IndependentBinomial):
        kind = 2
        ip[:2] = model.n_g, model.n_l
        fp[:2] = model.q_g, model.q_l
    elif isinstance(model, MixedPoisson):
        kind = 3
        fp[:2] = model.beta_g, model.beta_l
        if isinstance(model.mixing, Gamma):
            ip[0] = 0
            fp[2:4] = model.mixing.shape, model.mixing.rate
        else:
            ip[0] = 1
            fp[4] = model.mixing.value
    elif isinstance(model, JointTable):
        kind = 4
        tg = model._xg.copy()
        tl = model._xl.copy()
        tcum = np.cumsum(model._p)
        tcum /= tcum[-1]
    else:
        raise TypeError(f"cannot simulate {type(model).__name__}")
    return _Encoded(kind, ip, fp, tg, tl, tcum, 1.0 - keep)


def _seed64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & _MASK64)


def default_threads() -> int:
    env = os.environ.get("HHE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class PopulationSpec:
    n: int
    h: int
    model: ContactModel
    m: int = 1
    p: float = 0.0
    local_mode: Mode = Mode.WITH
    global_mode: Mode = Mode.WITH
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "local_mode", Mode.parse(self.local_mode))
        object.__setattr__(self, "global_mode", Mode.parse(self.global_mode))
        if self.n < 1 or self.h < 1:
            raise ValueError("need at least one household of size at least one")
        if not 1 <= self.m <= self.n * self.h:
            raise ValueError(f"m must lie in [1, {self.n * self.h}]")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.local_mode is Mode.WITHOUT and self.h > 1:
            ml = self.model.max_local
            if ml is None or ml > self.h - 1:
                raise ValueError("local sampling without replacement needs X_L <= h - 1")

    @property
    def N(self) -> int:
        return self.n * self.h


@dataclass(frozen=True)
class EpidemicOutcome:
    Z: int
    V: int
    total_global_contacts: int


@dataclass(frozen=True)
class OutcomeBatch(Sequence):
    """Outcomes of a batch, stored column-wise; indexing yields EpidemicOutcome."""

    Z: np.ndarray
    V: np.ndarray
    global_contacts: np.ndarray
    N: int = field(default=0)

    def __len__(self):
        return len(self.Z)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return OutcomeBatch(self.Z[i], self.V[i], self.global_contacts[i], self.N)
        return EpidemicOutcome(int(self.Z[i]), int(self.V[i]), int(self.global_contacts[i]))

    @property
    def fractions(self) -> np.ndarray:
        return self.Z / self.N

    def __eq__(self, other):
        if not isinstance(other, OutcomeBatch):
            return NotImplemented
        return (
            self.N == other.N
            and np.array_equal(self.Z, other.Z)
            and np.array_equal(self.V, other.V)
            and np.array_equal(self.global_contacts, other.global_contacts)
        )

    @classmethod
    def concat(cls, batches: list["OutcomeBatch"]) -> "OutcomeBatch":
        return cls(
            np.concatenate([b.Z for b in batches]),
            np.concatenate([b.V for b in batches]),
            np.concatenate([b.global_contacts for b in batches]),
            batches[0].N,
        )


def _chunks(start: int, stop: int, parts: int) -> list[tuple[int, int]]:
    edges = np.linspace(start, stop, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_batch(spec: PopulationSpec, n_runs: int, threads: int | None = None, start: int = 0) -> OutcomeBatch:
    """Simulate runs ``start .. start + n_runs - 1``; run i uses the stream keyed by (seed, i)."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    enc = encode_model(spec.model, spec.p)
    stop = start + n_runs
    out_z = np.zeros(stop, dtype=np.int64)
    out_v = np.zeros(stop, dtype=np.int64)
    out_g = np.zeros(stop, dtype=np.int64)
    seed = _seed64(spec.seed)

    def work(bounds):
        a, b = bounds
        _engine.epidemic_batch(
            seed, a, b, *enc.args(), enc.p, spec.n, spec.h, spec.m,
            spec.local_mode is Mode.WITH, spec.global_mode is Mode.WITH,
            out_z, out_v, out_g,
        )

    threads = threads or default_threads()
    chunks = _chunks(start, stop, min(threads, n_runs))
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            list(pool.map(work, chunks))
    return OutcomeBatch(out_z[start:], out_v[start:], out_g[start:], spec.N)


def run_epidemic(spec: PopulationSpec, run_index: int) -> EpidemicOutcome:
    return run_batch(spec, 1, threads=1, start=run_index)[0]


def sample_contacts(model: ContactModel, n: int, seed: int = 0, p: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Draw n pairs (X_G, X_L) with the engine's own samplers (post-swap)."""
    enc = encode_model(model, p)
    g = np.zeros(n, dtype=np.int64)
    l = np.zeros(n, dtype=np.int64)
    _engine.contacts_batch(_seed64(seed), n, *enc.args(), enc.p, g, l)
    return g, l


def simulate_households(
    model: ContactModel,
    h: int,
    tau: float,
    n: int,
    p: float = 0.0,
    local_mode: Mode | str = Mode.WITH,
    seed: int = 0,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Households whose members each receive Po(tau) global hits.

    Returns arrays R (number infected), G (global contacts made by the
    infected) and Y (total hits received).
    """
    local_mode = Mode.parse(local_mode)
    enc = encode_model(model, p)
    out_r = np.zeros(n, dtype=np.int64)
    out_g = np.zeros(n, dtype=np.int64)
    out_y = np.zeros(n, dtype=np.int64)
    seed64 = _seed64(seed)

    def work(bounds):
        a, b = bounds
        _engine.household_batch(
            seed64, a, b, *enc.args(), enc.p, h, float(tau), local_mode is Mode.WITH, out_r, out_g, out_y
        )

    threads = threads or default_threads()
    chunks = _chunks(0, n, min(threads, n))
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            list(pool.map(work, chunks))
    return out_r, out_g, out_y


def write_runs_csv(batch: OutcomeBatch, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["run", "Z", "V", "global_contacts"])
    for i in range(len(batch)):
        w.writerow([i, int(batch.Z[i]), int(batch.V[i]), int(batch.global_contacts[i])])


def run_until_majors(spec: PopulationSpec, n_major: int, cutoff, chunk: int = 10_000,
                     threads: int | None = None, max_runs: int = 10**8) -> OutcomeBatch:
    """Keep simulating in index order until ``n_major`` runs pass ``cutoff``.

    The returned batch holds every run performed (minor ones included), so the
    outbreak probability can still be estimated from it. It is truncated just
    after the run that produced the ``n_major``-th major outbreak, which makes
    the result independent of ``chunk`` and ``threads``.
    """
    batches = []
    done = 0
    found = 0
    while found < n_major:
        if done >= max_runs:
            raise RuntimeError(f"fewer than {n_major} major outbreaks in {max_runs} runs")
        b = run_batch(spec, min(chunk, max_runs - done), threads=threads, start=done)
        major = cutoff.is_major(b.Z, b.V, spec.N, spec.h)
        need = n_major - found
        hits = np.flatnonzero(major)
        if len(hits) >= need:
            b = b[: hits[need - 1] + 1]
            found = n_major
        else:
            found += len(hits)
        batches.append(b)
        done += len(b)
    return OutcomeBatch.concat(batches)
