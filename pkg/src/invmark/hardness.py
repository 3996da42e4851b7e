"""Exact watermark removal as a decision problem.

A separable monotone decoder thresholds nonnegative linear forms of the
parameter vector. Removal asks for a sparse, bounded-amplitude update that
flips every decoded bit; the module provides the certificate verifier, the
reduction from Hitting Set, and exact brute-force solvers for small
instances. Enumeration guards keep runtime at desk scale; beyond them the
solvers refuse rather than approximate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, MalformedLineError, TooLargeError

BRUTE_FORCE_MAX_SETS = 20
BRUTE_FORCE_MAX_SIGNED_DIMS = 12


@dataclass(frozen=True, eq=False)
class MonotoneDecoder:
    """Bits are 1[A theta >= b] with entrywise-nonnegative A."""

    weights: np.ndarray  # (m, d), nonnegative
    thresholds: np.ndarray  # (m,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.thresholds, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise DimMismatchError("weights must be (m, d) and thresholds (m,)")
        if np.any(w < 0.0):
            raise ValueError("decoder weights must be nonnegative")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "thresholds", b)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class HittingSetInstance:
    """Universe [m], a family of subsets, and a budget B."""

    universe_size: int
    sets: tuple[frozenset[int], ...]
    budget: int

    def __post_init__(self):
        canon = tuple(frozenset(s) for s in self.sets)
        object.__setattr__(self, "sets", canon)
        for s in canon:
            if not s:
                raise ValueError("sets must be nonempty")
            if any(not (0 <= u < self.universe_size) for u in s):
                raise ValueError("set element outside the universe")


@dataclass(frozen=True, eq=False)
class WmRemoveInstance:
    """Flip every decoded bit of theta_tilde under |J| <= budget and
    per-coordinate amplitude at least theta_min."""

    theta_tilde: np.ndarray
    decoder: MonotoneDecoder
    budget: int
    theta_min: float

    def __post_init__(self):
        theta = np.asarray(self.theta_tilde, dtype=float)
        if theta.ndim != 1 or theta.shape[0] != self.decoder.d:
            raise DimMismatchError("theta_tilde must match the decoder dimension")
        if self.theta_min <= 0.0:
            raise ValueError("theta_min must be positive")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_tilde", theta)


def decode_bits(dec: MonotoneDecoder, theta: np.ndarray) -> np.ndarray:
    """Thresholded linear forms; monotone because the weights are nonnegative."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dec.d,):
        raise DimMismatchError(f"theta has shape {theta.shape}, decoder wants ({dec.d},)")
    return (dec.weights @ theta >= dec.thresholds).astype(int)


def verify_certificate(inst: WmRemoveInstance, support, delta) -> bool:
    """Polynomial-time check of a removal certificate.

    Accepts iff the support has size at most the budget, delta is supported
    exactly there with amplitudes at least theta_min, and every decoded bit
    of theta_tilde + delta differs from the baseline. Malformed certificates
    return False. Runs in O(m d).
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (inst.decoder.d,):
        return False
    support_set = set(int(j) for j in support)
    if len(support_set) > inst.budget:
        return False
    if any(not (0 <= j < inst.decoder.d) for j in support_set):
        return False
    for j in range(inst.decoder.d):
        if j in support_set:
            if abs(delta[j]) < inst.theta_min:
                return False
        elif delta[j] != 0.0:
            return False
    before = decode_bits(inst.decoder, inst.theta_tilde)
    after = decode_bits(inst.decoder, inst.theta_tilde + delta)
    return bool(np.all(after == 1 - before))


def reduce_hitting_set(hs: HittingSetInstance, theta_min: float) -> WmRemoveInstance:
    """Map sets to coordinates and elements to bits: a_kj = 1[u_k in C_j],
    thresholds theta_min / 2, base point zero. Polynomial size O(m q)."""
    if theta_min <= 0.0:
        raise ValueError("theta_min must be positive")
    m = hs.universe_size
    q = len(hs.sets)
    weights = np.zeros((m, q))
    for j, subset in enumerate(hs.sets):
        for u in subset:
            weights[u, j] = 1.0
    decoder = MonotoneDecoder(weights=weights, thresholds=np.full(m, theta_min / 2.0))
    return WmRemoveInstance(
        theta_tilde=np.zeros(q), decoder=decoder, budget=hs.budget, theta_min=theta_min
    )


def brute_force_hitting_set(hs: HittingSetInstance) -> int | None:
    """Smallest number of sets covering every universe element, None if infeasible.

    (Each element u must be "hit" by some chosen set containing it; choosing
    sets is what maps to choosing parameter coordinates in the reduction.)
    Exact enumeration in increasing cardinality.
    """
    if len(hs.sets) > BRUTE_FORCE_MAX_SETS:
        raise TooLargeError(f"more than {BRUTE_FORCE_MAX_SETS} sets")
    universe = frozenset(range(hs.universe_size))
    q = len(hs.sets)
    for k in range(0, q + 1):
        for combo in itertools.combinations(range(q), k):
            covered = frozenset().union(*(hs.sets[j] for j in combo)) if combo else frozenset()
            if covered >= universe:
                return k
    return None


def brute_force_wm_remove(inst: WmRemoveInstance) -> bool:
    """Exact decision by enumerating supports with amplitude-theta_min updates.

    For instances whose baseline bits are all zero (the reduction's shape),
    positive updates suffice and supports up to dimension 20 are searched.
    General instances additionally try both signs per chosen coordinate and
    are guarded at dimension 12.
    """
    d = inst.decoder.d
    before = decode_bits(inst.decoder, inst.theta_tilde)
    all_up = not before.any()
    if all_up:
        if d > BRUTE_FORCE_MAX_SETS:
            raise TooLargeError(f"dimension above {BRUTE_FORCE_MAX_SETS}")
    elif d > BRUTE_FORCE_MAX_SIGNED_DIMS:
        raise TooLargeError(f"signed search above dimension {BRUTE_FORCE_MAX_SIGNED_DIMS}")
    max_support = min(inst.budget, d)
    for k in range(0, max_support + 1):
        for combo in itertools.combinations(range(d), k):
            if all_up:
                sign_patterns = [tuple([1.0] * k)]
            else:
                sign_patterns = itertools.product((1.0, -1.0), repeat=k)
            for signs in sign_patterns:
                delta = np.zeros(d)
                for j, s in zip(combo, signs):
                    delta[j] = s * inst.theta_min
                after = decode_bits(inst.decoder, inst.theta_tilde + delta)
                if np.all(after == 1 - before):
                    return True
    return False


def find_certificate(inst: WmRemoveInstance) -> tuple[list[int], np.ndarray] | None:
    """Like brute_force_wm_remove but returns the first accepting certificate."""
    d = inst.decoder.d
    before = decode_bits(inst.decoder, inst.theta_tilde)
    all_up = not before.any()
    guard = BRUTE_FORCE_MAX_SETS if all_up else BRUTE_FORCE_MAX_SIGNED_DIMS
    if d > guard:
        raise TooLargeError(f"dimension above {guard}")
    for k in range(0, min(inst.budget, d) + 1):
        for combo in itertools.combinations(range(d), k):
            patterns = [tuple([1.0] * k)] if all_up else itertools.product((1.0, -1.0), repeat=k)
            for signs in patterns:
                delta = np.zeros(d)
                for j, s in zip(combo, signs):
                    delta[j] = s * inst.theta_min
                if verify_certificate(inst, list(combo), delta):
                    return list(combo), delta
    return None


# --- text format -------------------------------------------------------------------


def format_hitting_set(hs: HittingSetInstance) -> str:
    """DIMACS-like: `p hs m q B` then one line of element indices per set."""
    lines = [f"p hs {hs.universe_size} {len(hs.sets)} {hs.budget}"]
    for s in hs.sets:
        lines.append(" ".join(str(u) for u in sorted(s)))
    return "\n".join(lines) + "\n"


def parse_hitting_set(text: str, path: str = "<string>") -> HittingSetInstance:
    lines = [ln for ln in text.splitlines()]
    if not lines or not lines[0].startswith("p hs"):
        raise MalformedLineError(path, 1, "expected header `p hs m q B`")
    parts = lines[0].split()
    if len(parts) != 5:
        raise MalformedLineError(path, 1, "expected header `p hs m q B`")
    try:
        m, q, budget = int(parts[2]), int(parts[3]), int(parts[4])
    except ValueError as exc:
        raise MalformedLineError(path, 1, "non-integer header fields") from exc
    sets = []
    for i, line in enumerate(lines[1 : 1 + q], start=2):
        try:
            elems = frozenset(int(x) for x in line.split())
        except ValueError as exc:
            raise MalformedLineError(path, i, "non-integer set element") from exc
        sets.append(elems)
    if len(sets) != q:
        raise MalformedLineError(path, len(lines), f"expected {q} set lines")
    return HittingSetInstance(universe_size=m, sets=tuple(sets), budget=budget)


def wm_remove_to_dict(inst: WmRemoveInstance) -> dict:
    return {
        "theta_tilde": [float(x) for x in inst.theta_tilde],
        "weights": [[float(x) for x in row] for row in inst.decoder.weights],
        "thresholds": [float(x) for x in inst.decoder.thresholds],
        "budget": inst.budget,
        "theta_min": inst.theta_min,
    }


def wm_remove_from_dict(doc: dict) -> WmRemoveInstance:
    decoder = MonotoneDecoder(
        weights=np.array(doc["weights"], dtype=float),
        thresholds=np.array(doc["thresholds"], dtype=float),
    )
    return WmRemoveInstance(
        theta_tilde=np.array(doc["theta_tilde"], dtype=float),
        decoder=decoder,
        budget=int(doc["budget"]),
        theta_min=float(doc["theta_min"]),
    )
