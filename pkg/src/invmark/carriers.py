"""Owner-private carrier generation and the induced secret key.

Carriers are degree-preserving rewirings of task graphs, gated by a
structural out-of-support check (WL hash non-collision) and two
distribution-similarity checks (KS tests on degrees and local clustering).
The normalized algebraic connectivity of each accepted carrier induces one
key bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptySampleError,
    InsufficientCarriersError,
    ProtocolExhaustedError,
)
from .graphs import (
    Graph,
    NormalizationConstants,
    fit_normalization,
    graph_statistics,
    hash_set_digest,
    lambda2,
    local_clustering,
    normalize_lambda2_value,
    wl_hash,
)
from .stats_util import benjamini_hochberg, kolmogorov_survival

# Swap proposals per requested swap before giving up (best effort).
_SWAP_RETRY_FACTOR = 100
# Seed graphs tried per carrier slot before declaring the protocol exhausted.
_SEED_ATTEMPTS_PER_CARRIER = 64
# Reference pools for the KS gates come from this many eligible graphs
# closest to the seed in mean degree (the seed's density stratum).
_REFERENCE_POOL_SIZE = 20
# BH significance level for the cross-carrier correlation screen.
_BH_LEVEL = 0.05
# Lag correlations need at least this many pairs, and only lags up to
# _MAX_LAG are tested: mixing is near-diagonal sequence dependence, and
# long lags leave so few pairs that they only add noise to the maximum.
_MIN_LAG_SAMPLES = 8
_MAX_LAG = 32
# Permutations calibrating each statistic's max-over-lags correlation.
_RHO_PERMUTATIONS = 1999


@dataclass(frozen=True)
class ProtocolParams:
    """Knobs of the carrier sampling protocol.

    ``target_margin`` is a dead zone around the decoding midpoint: carriers
    whose normalized invariant lands within it are resampled. Keeping
    targets away from 1/2 is what gives the trained model a usable
    robustness margin; published operating points with margins near 0.38
    presuppose exactly this separation.
    """

    swap_start: int = 5
    swap_increment: int = 5
    swap_cap: int = 50
    ks_delta: float = 0.1
    size_percentile: float = 25.0
    target_margin: float = 0.15
    rng_seed: int = 0

    def __post_init__(self):
        if not (0 < self.swap_start <= self.swap_cap):
            raise ValueError("need 0 < swap_start <= swap_cap")
        if self.swap_increment <= 0:
            raise ValueError("swap_increment must be positive")
        if not (0.0 < self.ks_delta < 1.0):
            raise ValueError("ks_delta must be in (0, 1)")
        if not (0.0 <= self.target_margin < 0.5):
            raise ValueError("target_margin must be in [0, 0.5)")

    def swap_schedule(self) -> list[int]:
        return list(range(self.swap_start, self.swap_cap + 1, self.swap_increment))


@dataclass(frozen=True, eq=False)
class CarrierBundle:
    """Secret key material: carriers, targets, bits, and frozen constants."""

    carriers: tuple[Graph, ...]
    targets: np.ndarray
    key_bits: np.ndarray
    norm_constants: NormalizationConstants
    protocol: ProtocolParams
    train_hash_set_digest: str
    size_cap: float

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float)
        bits = np.asarray(self.key_bits, dtype=int)
        targets.setflags(write=False)
        bits.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "key_bits", bits)
        if not (len(self.carriers) == len(targets) == len(bits)):
            raise ValueError("carriers, targets and key_bits must align")
        if not np.array_equal(bits, (targets >= 0.5).astype(int)):
            raise ValueError("key_bits must equal 1[target >= 0.5]")
        hashes = [wl_hash(g) for g in self.carriers]
        if len(set(hashes)) != len(hashes):
            raise ValueError("carrier WL hashes must be pairwise distinct")
        if any(g.node_count > self.size_cap for g in self.carriers):
            raise ValueError("carrier exceeds the recorded size cap")

    @property
    def m(self) -> int:
        return len(self.carriers)


BUNDLE_SCHEMA_VERSION = 1


def bundle_to_dict(bundle: CarrierBundle) -> dict:
    """Versioned JSON document for the bundle. This is the secret key
    material; it must only ever be written to files, never echoed."""
    return {
        "version": BUNDLE_SCHEMA_VERSION,
        "params": {
            "swap_start": bundle.protocol.swap_start,
            "swap_increment": bundle.protocol.swap_increment,
            "swap_cap": bundle.protocol.swap_cap,
            "ks_delta": bundle.protocol.ks_delta,
            "size_percentile": bundle.protocol.size_percentile,
            "target_margin": bundle.protocol.target_margin,
            "rng_seed": bundle.protocol.rng_seed,
        },
        "norm_constants": {
            "lambda_min": bundle.norm_constants.lambda_min,
            "lambda_scale": bundle.norm_constants.lambda_scale,
            "frozen": bundle.norm_constants.frozen,
        },
        "carriers": [
            {"n": g.node_count, "edges": [[u, v] for u, v in g.edges]} for g in bundle.carriers
        ],
        "targets": [float(t) for t in bundle.targets],
        "key_bits": [int(b) for b in bundle.key_bits],
        "train_hash_set_digest": bundle.train_hash_set_digest,
        "size_cap": bundle.size_cap,
    }


def bundle_from_dict(doc: dict) -> CarrierBundle:
    if doc.get("version") != BUNDLE_SCHEMA_VERSION:
        raise ValueError(f"unsupported bundle version {doc.get('version')}")
    params = ProtocolParams(**doc["params"])
    consts = NormalizationConstants(**doc["norm_constants"])
    carriers = tuple(
        Graph(rec["n"], tuple((u, v) for u, v in rec["edges"])) for rec in doc["carriers"]
    )
    return CarrierBundle(
        carriers=carriers,
        targets=np.array(doc["targets"], dtype=float),
        key_bits=np.array(doc["key_bits"], dtype=int),
        norm_constants=consts,
        protocol=params,
        train_hash_set_digest=doc["train_hash_set_digest"],
        size_cap=float(doc["size_cap"]),
    )


def double_edge_swap(g: Graph, swaps: int, rng: np.random.Generator) -> Graph:
    """Degree-preserving rewiring by repeated double-edge swaps.

    Each accepted swap replaces edges (a,b),(c,d) with (a,d),(c,b).
    Proposals creating self-loops or duplicate edges are rejected; after
    100 proposals per requested swap the best-effort result is returned
    (some graphs, e.g. stars, admit no swap at all). Node features are
    dropped when swaps are attempted: structure-derived features of the
    seed do not describe the rewired graph, and scoring recomputes them.
    """
    if swaps == 0:
        return Graph(g.node_count, g.edges, g.node_features)
    if g.edge_count < 2:
        raise ValueError("need at least 2 edges to swap")
    edges = list(g.edges)
    edge_set = set(edges)
    done = 0
    budget = _SWAP_RETRY_FACTOR * max(1, swaps)
    while done < swaps and budget > 0:
        budget -= 1
        i, j = rng.integers(0, len(edges), size=2)
        if i == j:
            continue
        a, b = edges[i]
        c, d = edges[j]
        if rng.random() < 0.5:
            a, b = b, a
        if rng.random() < 0.5:
            c, d = d, c
        e1 = (min(a, d), max(a, d))
        e2 = (min(c, b), max(c, b))
        if a == d or c == b or e1 == e2 or e1 in edge_set or e2 in edge_set:
            continue
        edge_set.remove(edges[i])
        edge_set.remove(edges[j])
        edge_set.add(e1)
        edge_set.add(e2)
        for idx, new in ((i, e1), (j, e2)):
            edges[idx] = new
        done += 1
    return Graph(g.node_count, tuple(edges))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    D is the supremum gap between the empirical CDFs; the p-value evaluates
    the Kolmogorov survival function at sqrt(n_a n_b / (n_a + n_b)) * D.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise EmptySampleError("both samples must be nonempty")
    everything = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, everything, side="right") / len(a)
    cdf_b = np.searchsorted(b, everything, side="right") / len(b)
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = len(a) * len(b) / (len(a) + len(b))
    p = kolmogorov_survival(math.sqrt(n_eff) * d)
    return d, p


def sample_carrier(
    seed_graph: Graph,
    train_hashes: set[str],
    accepted_hashes: set[str],
    ref_degrees,
    ref_clustering,
    p: ProtocolParams,
    rng: np.random.Generator,
) -> Graph | None:
    """One carrier attempt: escalate swap counts until both gates pass.

    Returns the first rewiring whose WL hash collides with neither the task
    support nor previously accepted carriers, and whose degree and local
    clustering samples pass the KS similarity gates at p >= ks_delta.
    Returns None (rejected) when the swap cap is exhausted; the caller
    resamples a new seed graph.
    """
    for swaps in p.swap_schedule():
        candidate = double_edge_swap(seed_graph, swaps, rng)
        if wl_hash(candidate) in train_hashes or wl_hash(candidate) in accepted_hashes:
            continue
        _, p_deg = ks_two_sample(candidate.degrees().astype(float), ref_degrees)
        if p_deg < p.ks_delta:
            continue
        _, p_clu = ks_two_sample(local_clustering(candidate), ref_clustering)
        if p_clu < p.ks_delta:
            continue
        return candidate
    return None


def build_bundle(task_graphs: list[Graph], m: int, p: ProtocolParams) -> CarrierBundle:
    """Generate m carriers and the induced key; deterministic given p.rng_seed.

    Normalization constants are fit on the task graphs and frozen. Carrier
    size is capped at the size_percentile (default 25th) of task node
    counts; seed graphs are drawn with replacement from the graphs under the
    cap, and each carrier slot derives its own RNG stream from
    (rng_seed, slot index). Reference pools for the KS gates are the pooled
    degrees and local clustering values of the seed's density stratum: the
    20 eligible graphs closest to it in mean degree. Stratifying keeps the
    similarity gates meaningful when the task mixes structurally distinct
    graph families.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    consts = fit_normalization(task_graphs)
    size_cap = float(np.percentile([g.node_count for g in task_graphs], p.size_percentile))
    eligible = [g for g in task_graphs if g.node_count <= size_cap and g.edge_count >= 2]
    if not eligible:
        raise ProtocolExhaustedError("no seed graphs under the size cap")
    train_hashes = {wl_hash(g) for g in task_graphs}
    mean_degrees = np.array([g.degrees().mean() for g in eligible])
    pool_size = min(len(eligible), _REFERENCE_POOL_SIZE)

    def _reference_pools(seed_idx: int) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(np.abs(mean_degrees - mean_degrees[seed_idx]), kind="stable")
        stratum = [eligible[i] for i in order[:pool_size]]
        degs = np.concatenate([g.degrees().astype(float) for g in stratum])
        clus = np.concatenate([local_clustering(g) for g in stratum])
        return degs, clus

    carriers: list[Graph] = []
    targets_list: list[float] = []
    accepted_hashes: set[str] = set()
    for k in range(m):
        rng = np.random.default_rng([p.rng_seed, k])
        accepted = None
        target = 0.0
        for _ in range(_SEED_ATTEMPTS_PER_CARRIER):
            seed_idx = int(rng.integers(0, len(eligible)))
            ref_degrees, ref_clustering = _reference_pools(seed_idx)
            candidate = sample_carrier(
                eligible[seed_idx], train_hashes, accepted_hashes, ref_degrees, ref_clustering, p, rng
            )
            if candidate is None:
                continue
            target = normalize_lambda2_value(lambda2(candidate), consts)
            if abs(target - 0.5) < p.target_margin:
                continue
            accepted = candidate
            break
        if accepted is None:
            raise ProtocolExhaustedError(
                f"carrier {k}: no acceptance after {_SEED_ATTEMPTS_PER_CARRIER} seeds"
            )
        carriers.append(accepted)
        targets_list.append(target)
        accepted_hashes.add(wl_hash(accepted))

    targets = np.array(targets_list)
    bits = (targets >= 0.5).astype(int)
    return CarrierBundle(
        carriers=tuple(carriers),
        targets=targets,
        key_bits=bits,
        norm_constants=consts,
        protocol=p,
        train_hash_set_digest=hash_set_digest(train_hashes),
        size_cap=size_cap,
    )


def _max_lag_abs_corr(rows: np.ndarray) -> np.ndarray:
    """Row-wise max over lags of |Pearson autocorrelation|.

    ``rows`` is (r, m); lags leaving fewer than _MIN_LAG_SAMPLES pairs are
    skipped, and window pairs where either side is constant contribute 0.
    """
    r, m = rows.shape
    best = np.zeros(r)
    for lag in range(1, min(m - _MIN_LAG_SAMPLES, _MAX_LAG) + 1):
        x = rows[:, : m - lag]
        y = rows[:, lag:]
        xc = x - x.mean(axis=1, keepdims=True)
        yc = y - y.mean(axis=1, keepdims=True)
        sx = np.sqrt((xc**2).sum(axis=1))
        sy = np.sqrt((yc**2).sum(axis=1))
        denom = sx * sy
        ok = denom > 1e-12
        corr = np.zeros(r)
        corr[ok] = np.abs((xc * yc).sum(axis=1)[ok] / denom[ok])
        best = np.maximum(best, corr)
    return best


def estimate_rho0(bundle: CarrierBundle, head_scores=None) -> float:
    """Empirical mixing coefficient: largest significant cross-carrier correlation.

    For every statistic in the 128-slot bank (plus the perception scores
    when provided), the carrier sequence is autocorrelated at lags 1..32
    (lags must leave at least 8 pairs), and the max |correlation| over lags is
    calibrated against 1999 seeded permutations of the same column (valid
    for arbitrary marginals, including heavily tied ones). The per-statistic
    permutation p-values are BH-corrected at level 0.05 and the estimate is
    the largest |correlation| among survivors, 0 when nothing survives.
    Constant (zero-variance) statistics are skipped. Deterministic: the
    permutation streams are fixed by the statistic index.
    """
    m = bundle.m
    if m < 3:
        raise InsufficientCarriersError("need at least 3 carriers")
    stats = np.stack([graph_statistics(g) for g in bundle.carriers], axis=0)
    if head_scores is not None:
        scores = np.asarray(head_scores, dtype=float).reshape(m, 1)
        stats = np.hstack([stats, scores])

    best_corr: list[float] = []
    best_p: list[float] = []
    for col_idx, col in enumerate(stats.T):
        if np.std(col) < 1e-12:
            continue
        observed = float(_max_lag_abs_corr(col.reshape(1, -1))[0])
        if observed <= 0.0:
            continue
        rng = np.random.default_rng([0x5EED, col_idx])
        perms = rng.permuted(np.tile(col, (_RHO_PERMUTATIONS, 1)), axis=1)
        perm_max = _max_lag_abs_corr(perms)
        exceed = int(np.sum(perm_max >= observed - 1e-12))
        best_corr.append(observed)
        best_p.append((1 + exceed) / (_RHO_PERMUTATIONS + 1))

    if not best_corr:
        return 0.0
    survivors = benjamini_hochberg(np.array(best_p), _BH_LEVEL)
    if not survivors.any():
        return 0.0
    return float(np.max(np.asarray(best_corr)[survivors]))
