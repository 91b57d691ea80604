"""Synthetic row generation and the targeted-augmentation step.

SMOTE is built in: each synthetic row is a uniform point on the segment
between a source row and one of its same-class nearest neighbors. Any
external generator can plug in through a CSV file handshake instead.
Targeted augmentation fits the generator only on the hardest fraction of
the training set and unions the synthetic rows with the original data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ._util import round_half_up
from .dataset import Dataset, load_csv, save_csv
from .neighbors import k_nearest
from .valuation import ValuationScores, hardest_subset

GENERATOR_KINDS = ("smote", "external")


@dataclass(frozen=True)
class GeneratorSpec:
    """Which generator to run and with which parameters.

    smote params: k_neighbors (default 5), seed.
    external params: exec_in (CSV we write the source rows to) and
    exec_out (CSV the external tool leaves the synthetic rows in).
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        params = dict(self.params)
        if self.kind == "smote" and int(params.get("k_neighbors", 5)) < 1:
            raise ValueError("smote requires k_neighbors >= 1")
        object.__setattr__(self, "params", params)

    def with_seed(self, seed: int) -> "GeneratorSpec":
        return GeneratorSpec(self.kind, {**self.params, "seed": seed})


@dataclass(frozen=True)
class SyntheticBatch:
    """Generated rows plus where they came from."""

    rows: np.ndarray
    labels: np.ndarray
    generator: str
    seed: int
    source_ids: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        source_ids = np.array(self.source_ids, dtype=np.int64)
        for arr in (rows, labels, source_ids):
            arr.setflags(write=False)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("batch must contain at least one row")
        if labels.shape != (rows.shape[0],):
            raise ValueError("labels length must match rows")
        if not np.all(np.isfinite(rows)):
            raise ValueError("synthetic rows contain NaN or infinite entries")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "source_ids", source_ids)

    @property
    def m(self) -> int:
        return self.rows.shape[0]


def _class_allocation(labels: np.ndarray, m: int) -> dict[int, int]:
    """Largest-remainder allocation of m rows proportional to class prevalence."""
    n = labels.shape[0]
    classes = np.unique(labels)
    quotas = {int(c): m * int((labels == c).sum()) / n for c in classes}
    counts = {c: math.floor(q) for c, q in quotas.items()}
    leftover = m - sum(counts.values())
    by_remainder = sorted(quotas, key=lambda c: (-(quotas[c] - counts[c]), c))
    for c in by_remainder[:leftover]:
        counts[c] += 1
    return counts


def smote_generate(
    source: Dataset, m: int, k_neighbors: int = 5, seed: int = 0
) -> SyntheticBatch:
    """Sample m rows along segments between same-class nearest neighbors.

    Classes are represented proportionally to their prevalence in the
    source (largest-remainder rounding); each row copies its seed point's
    label. Neighbor search happens inside the source only.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = _class_allocation(source.labels, m)
    rows = np.empty((m, source.d))
    labels = np.empty(m, dtype=np.int64)
    out = 0
    for cls in sorted(counts):
        quota = counts[cls]
        if quota == 0:
            continue
        members = np.flatnonzero(source.labels == cls)
        if members.shape[0] < k_neighbors + 1:
            raise ValueError(
                f"class {cls} has {members.shape[0]} rows; "
                f"needs at least k_neighbors+1 = {k_neighbors + 1} for SMOTE"
            )
        X = source.features[members]
        # self is always the nearest at distance 0; drop that column
        neighbor_idx = k_nearest(X, X, k_neighbors + 1)[:, 1:]
        picks = rng.integers(0, members.shape[0], size=quota)
        neighbor_pick = rng.integers(0, k_neighbors, size=quota)
        u = rng.uniform(size=quota)[:, None]
        base = X[picks]
        partner = X[neighbor_idx[picks, neighbor_pick]]
        rows[out:out + quota] = base + u * (partner - base)
        labels[out:out + quota] = cls
        out += quota
    return SyntheticBatch(rows, labels, "smote", seed, source.ids)


class ExternalGeneratorError(RuntimeError):
    pass


def external_generate(
    source: Dataset, m: int, exec_in: str | Path, exec_out: str | Path, seed: int = 0
) -> SyntheticBatch:
    """File handshake with an out-of-process generator.

    Writes the source rows to exec_in and ingests exec_out, which the
    external tool must have produced with the same columns and a ``label``
    column. Validates shape, label domain, and finiteness.
    """
    save_csv(source, exec_in, label_column="label")
    out_path = Path(exec_out)
    if not out_path.exists():
        raise ExternalGeneratorError(
            f"external generator output {out_path} not found; "
            f"source rows were written to {exec_in}"
        )
    synth = load_csv(out_path, label_column="label")
    if synth.d != source.d:
        raise ExternalGeneratorError(
            f"external rows have {synth.d} features, source has {source.d}"
        )
    source_label_domain = set(np.unique(source.labels).tolist())
    if not set(np.unique(synth.labels).tolist()) <= source_label_domain:
        raise ExternalGeneratorError("external rows use labels absent from the source subset")
    if synth.n < m:
        raise ExternalGeneratorError(f"external generator produced {synth.n} rows, need {m}")
    return SyntheticBatch(synth.features[:m], synth.labels[:m], "external", seed, source.ids)


def generate(source: Dataset, m: int, gen: GeneratorSpec) -> SyntheticBatch:
    """Dispatch to the generator named by the spec."""
    seed = int(gen.params.get("seed", 0))
    if gen.kind == "smote":
        return smote_generate(source, m, int(gen.params.get("k_neighbors", 5)), seed)
    exec_in = gen.params.get("exec_in")
    exec_out = gen.params.get("exec_out")
    if not exec_in or not exec_out:
        raise ValueError("external generator requires exec_in and exec_out paths")
    return external_generate(source, m, str(exec_in), str(exec_out), seed)


def append_batch(train: Dataset, batch: SyntheticBatch) -> Dataset:
    """Union of the training set and a batch; synthetic rows get fresh ids."""
    if batch.rows.shape[1] != train.d:
        raise ValueError("batch dimension does not match the training set")
    first_free = int(train.ids.max()) + 1
    new_ids = np.arange(first_free, first_free + batch.m, dtype=np.int64)
    return Dataset(
        np.concatenate([train.features, batch.rows]),
        np.concatenate([train.labels, batch.labels]),
        train.feature_names,
        np.concatenate([train.ids, new_ids]),
    )


def targeted_augment(
    train: Dataset,
    scores: ValuationScores,
    tau: float,
    amount: float,
    gen: GeneratorSpec,
) -> Dataset:
    """Fit the generator on the tau-hardest rows and union its samples with train.

    Generates round(amount * ceil(tau*n)) rows; tau=1 is the non-targeted
    baseline. Original rows and ids are untouched.
    """
    if amount <= 0:
        raise ValueError("amount must be positive")
    hard = hardest_subset(train, scores, tau)
    m = round_half_up(amount * hard.n)
    if m == 0:
        raise ValueError(f"amount {amount} of {hard.n} hard rows rounds to zero synthetic rows")
    batch = generate(hard, m, gen)
    return append_batch(train, batch)


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic, tie-safe."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.shape[0]
    cdf_b = np.searchsorted(b, grid, side="right") / b.shape[0]
    return float(np.abs(cdf_a - cdf_b).max())


def weighted_ks(
    real: Dataset, synth: SyntheticBatch, weights: np.ndarray | None = None
) -> float:
    """Weighted mean of per-feature two-sample KS statistics in [0, 1].

    0 means identical marginals, 1 disjoint supports on every weighted
    feature. Weights default to uniform and are normalized internally.
    """
    if synth.rows.shape[1] != real.d:
        raise ValueError("feature dimension mismatch")
    if weights is None:
        weights = np.ones(real.d)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (real.d,) or (weights < 0).any():
        raise ValueError("weights must be length-d and nonnegative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    stats = np.array(
        [_ks_statistic(real.features[:, f], synth.rows[:, f]) for f in range(real.d)]
    )
    return float((weights * stats).sum() / total)
