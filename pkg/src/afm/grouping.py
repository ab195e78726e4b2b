"""Group construction and the self-attention weight network.

Groups of K distinct minibatch indices are sampled (with replacement
across groups), each ordered member is projected through its own affine
map, the projections are combined by an interaction (concat, sum, or
elementwise product), and a two-layer net emits K sigmoid weights per
group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .model import Affine
from .tensor import Tensor

INTERACTIONS = ("concat", "sum", "mul")
PROJECTION_MODES = ("distinct", "shared", "none")


@dataclass(frozen=True)
class Group:
    """Ordered tuple of K distinct minibatch positions with their given labels."""

    members: tuple[int, ...]
    labels: tuple[int, ...]

    @property
    def kind(self) -> str:
        return "intra" if len(set(self.labels)) == 1 else "inter"


@dataclass
class AttentionOutput:
    weights: Tensor  # (m, K), every entry strictly in (0, 1)
    groups: list[Group]


def sample_groups(labels, m: int, k: int, ratio_policy: str = "random",
                  intra_ratio: float | None = None,
                  rng: np.random.Generator | None = None) -> list[Group]:
    """Sample m groups of K distinct indices from a minibatch.

    ratio_policy "random" draws members uniformly without replacement
    within a group; "fixed-ratio" forces round(intra_ratio * m) groups to
    be intra-class and the rest inter-class.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 1 or n < k:
        raise ConfigError(f"need n >= K >= 1, got n={n}, K={k}")
    if m < 1:
        raise ConfigError(f"need m >= 1, got m={m}")
    if rng is None:
        rng = np.random.default_rng()

    def make(idx):
        idx = tuple(int(i) for i in idx)
        return Group(idx, tuple(int(labels[i]) for i in idx))

    if ratio_policy == "random":
        return [make(rng.choice(n, size=k, replace=False)) for _ in range(m)]

    if ratio_policy != "fixed-ratio":
        raise ConfigError(f"unknown ratio policy {ratio_policy!r}")
    if intra_ratio is None or not 0.0 <= intra_ratio <= 1.0:
        raise ConfigError("fixed-ratio needs intra_ratio in [0, 1]")

    classes, counts = np.unique(labels, return_counts=True)
    rich = classes[counts >= k]
    m_intra = int(round(intra_ratio * m))
    m_inter = m - m_intra
    if m_intra > 0 and len(rich) == 0:
        raise ConfigError(f"no class has >= {k} members; intra groups unachievable")
    if m_inter > 0 and len(classes) < 2:
        raise ConfigError("single-class batch; inter groups unachievable")

    groups = []
    for _ in range(m_intra):
        c = rich[rng.integers(len(rich))]
        pool = np.flatnonzero(labels == c)
        groups.append(make(rng.choice(pool, size=k, replace=False)))
    for _ in range(m_inter):
        while True:
            idx = rng.choice(n, size=k, replace=False)
            if len(set(labels[idx])) > 1:
                groups.append(make(idx))
                break
    return groups


class GAParams:
    """Positional projection maps plus the attention net (FC-ReLU-FC-Sigmoid)."""

    def __init__(self, feature_dim: int, k: int, interaction: str = "sum",
                 projections: str = "distinct",
                 rng: np.random.Generator | None = None,
                 hidden_dim: int | None = None):
        if interaction not in INTERACTIONS:
            raise ConfigError(f"interaction must be one of {INTERACTIONS}")
        if projections not in PROJECTION_MODES:
            raise ConfigError(f"projections must be one of {PROJECTION_MODES}")
        self.feature_dim = feature_dim
        self.k = k
        self.interaction = interaction
        self.projections = projections
        if projections == "distinct":
            self.proj = [Affine(feature_dim, feature_dim, rng) for _ in range(k)]
        elif projections == "shared":
            shared = Affine(feature_dim, feature_dim, rng)
            self.proj = [shared] * k
        else:
            self.proj = []
        d_in = k * feature_dim if interaction == "concat" else feature_dim
        h = hidden_dim if hidden_dim is not None else feature_dim
        self.att1 = Affine(d_in, h, rng)
        self.att2 = Affine(h, k, rng)

    def parameters(self):
        out = []
        if self.projections == "distinct":
            for i, p in enumerate(self.proj):
                out.extend(p.parameters(f"ga.proj{i}"))
        elif self.projections == "shared":
            out.extend(self.proj[0].parameters("ga.proj_shared"))
        out.extend(self.att1.parameters("ga.att1"))
        out.extend(self.att2.parameters("ga.att2"))
        return out


def member_selectors(groups: list[Group], n: int, k: int) -> list[np.ndarray]:
    """One-hot (m, n) selector matrix per group position; S_k @ features
    gathers the k-th member rows differentiably."""
    m = len(groups)
    sels = [np.zeros((m, n)) for _ in range(k)]
    for gi, g in enumerate(groups):
        if len(g.members) != k:
            raise ShapeError(f"group {gi} has {len(g.members)} members, expected {k}")
        for pos, idx in enumerate(g.members):
            if not 0 <= idx < n:
                raise ShapeError(f"group index {idx} out of range [0, {n})")
            sels[pos][gi, idx] = 1.0
    return sels


def attend(features: Tensor, groups: list[Group], params: GAParams) -> AttentionOutput:
    """Project each ordered member, combine via the interaction, and emit
    K sigmoid attention weights per group. Differentiable end-to-end."""
    n, d = features.values.shape
    if d != params.feature_dim:
        raise ShapeError(f"features width {d} != GA feature dim {params.feature_dim}")
    k = params.k
    sels = member_selectors(groups, n, k)

    projected = []
    for pos in range(k):
        xk = T.matmul(T.constant(sels[pos]), features)
        if params.projections != "none":
            xk = params.proj[pos](xk)
        projected.append(xk)

    if params.interaction == "concat":
        combined = T.concat_last(projected)
    elif params.interaction == "sum":
        combined = projected[0]
        for xk in projected[1:]:
            combined = T.add(combined, xk)
    else:
        combined = projected[0]
        for xk in projected[1:]:
            combined = T.mul(combined, xk)

    hidden = T.relu(params.att1(combined))
    weights = T.sigmoid(params.att2(hidden))
    return AttentionOutput(weights=weights, groups=list(groups))


def pure_noisy_group_ratio(n_noisy: int, n_total: int, k: int) -> float:
    """Fraction of ordered K-groups whose members are all mislabeled:
    prod_{t<K} (n_noisy - t) / (n_total - t); 0 when n_noisy < K."""
    if not 0 <= n_noisy <= n_total:
        raise ConfigError(f"need 0 <= n_noisy <= n_total, got {n_noisy}, {n_total}")
    if not 1 <= k <= n_total:
        raise ConfigError(f"need 1 <= K <= n_total, got K={k}")
    if n_noisy < k:
        return 0.0
    ratio = 1.0
    for t in range(k):
        ratio *= (n_noisy - t) / (n_total - t)
    return ratio
