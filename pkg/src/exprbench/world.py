"""Seeded synthetic expression manifold for the desk-scale trainer.

A world holds identity base points, 12 unit prototype directions whose
registered confusing pairs sit at an exact target cosine, a per-expression
conditioning-anchor table standing in for a frozen text encoder, and two
frozen linear projections standing in for the frozen feature and identity
encoders. Everything is drawn from one seed and is bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affect import DEFAULT_REGISTRY, ConfusingPairRegistry, ExpressionId
from .errors import AlphaOutOfRange, RankDeficiency
from .interp import DEFAULT_ALPHA_MAX, interpolate, residual_direction

# Unregistered prototype pairs must stay below this cosine (or below the
# configured overlap when that is higher), so registered pairs are always the
# most similar directions in the world.
OFFPAIR_COS_CAP = 0.6

# The conditioning-anchor table mirrors the manifold's overlap: registered
# pairs get anchor directions at the same cosine as their prototypes, scaled
# to this magnitude. Small anchor gaps are what make confusing pairs hard to
# separate from conditioning alone.
ANCHOR_SCALE = 0.45

_VECTOR_RETRIES = 500
_SET_RETRIES = 20


@dataclass(frozen=True)
class SyntheticWorldConfig:
    latent_dim: int = 8
    embed_dim: int = 16
    n_identities: int = 64
    overlap: float = 0.8
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 2 or self.embed_dim < 2:
            raise ValueError("latent_dim and embed_dim must be >= 2")
        if not (0.0 <= self.overlap < 1.0):
            raise ValueError("overlap must lie in [0, 1)")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be > 0")
        if self.n_identities < 2:
            raise ValueError("need at least 2 identities")


@dataclass(frozen=True)
class FrozenEncoders:
    """Fixed linear maps into feature / identity space; never updated."""

    feature_proj: np.ndarray
    id_proj: np.ndarray


@dataclass(frozen=True)
class World:
    cfg: SyntheticWorldConfig
    registry: ConfusingPairRegistry
    identities: np.ndarray
    prototypes: np.ndarray
    anchor_neutral: np.ndarray
    anchors: np.ndarray
    encoders: FrozenEncoders

    def prototype(self, expr: ExpressionId) -> np.ndarray:
        return self.prototypes[expr - 1]

    def anchor(self, expr: ExpressionId) -> np.ndarray:
        return self.anchors[expr - 1]

    def sample(
        self,
        identity: int,
        expr: ExpressionId | None,
        alpha: float,
        rng: np.random.Generator,
        alpha_max: float = DEFAULT_ALPHA_MAX,
    ) -> np.ndarray:
        """Latent draw u_id + alpha * p_expr + sigma * noise."""
        if not (0.0 <= alpha <= alpha_max):
            raise AlphaOutOfRange(alpha, alpha_max)
        x = self.identities[identity].copy()
        if expr is not None and expr != ExpressionId.NEUTRAL and alpha > 0.0:
            x += alpha * self.prototype(expr)
        x += self.cfg.noise_sigma * rng.standard_normal(self.cfg.latent_dim)
        return x

    def encode_condition(
        self, expr: ExpressionId, alpha: float, alpha_max: float = DEFAULT_ALPHA_MAX
    ) -> np.ndarray:
        """Conditioning embedding e_neu + alpha * (anchor - e_neu)."""
        if expr == ExpressionId.NEUTRAL:
            if alpha != 0.0:
                raise AlphaOutOfRange(alpha, 0.0)
            return self.anchor_neutral.copy()
        d = residual_direction(self.anchor_neutral, self.anchor(expr))
        return interpolate(self.anchor_neutral, d, alpha, alpha_max)

    def features(self, x: np.ndarray) -> np.ndarray:
        return self.encoders.feature_proj @ x

    def id_features(self, x: np.ndarray) -> np.ndarray:
        return self.encoders.id_proj @ x


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    for _ in range(_VECTOR_RETRIES):
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 1e-8:
            return v / n
    raise RankDeficiency("could not draw a unit vector")


def _draw_overlapping_directions(
    rng: np.random.Generator,
    dim: int,
    overlap: float,
    registry: ConfusingPairRegistry,
) -> np.ndarray:
    """12 unit directions: pair members at cosine == overlap, everything else
    strictly below max(overlap, OFFPAIR_COS_CAP)."""
    d = dim
    thr = max(overlap, OFFPAIR_COS_CAP)
    protos = np.zeros((12, d))
    placed: list[int] = []  # expression codes already placed

    def clashes(v: np.ndarray, partner_code: int | None) -> bool:
        for code in placed:
            if partner_code is not None and code == partner_code:
                continue
            if float(np.dot(v, protos[code - 1])) >= thr:
                return True
        return False

    for i, j in registry.pairs:
        for _ in range(_VECTOR_RETRIES):
            e1 = _unit(rng, d)
            raw = rng.standard_normal(d)
            e2 = raw - np.dot(raw, e1) * e1
            n2 = np.linalg.norm(e2)
            if n2 < 1e-8:
                continue
            e2 /= n2
            p_i = e1
            p_j = overlap * e1 + np.sqrt(1.0 - overlap**2) * e2
            if clashes(p_i, int(j)) or clashes(p_j, int(i)):
                continue
            protos[i - 1] = p_i
            protos[j - 1] = p_j
            placed.extend([int(i), int(j)])
            break
        else:
            raise RankDeficiency("could not place a confusing pair")

    members = set(int(e) for e in registry.members())
    for code in range(1, 13):
        if code in members:
            continue
        for _ in range(_VECTOR_RETRIES):
            v = _unit(rng, d)
            if not clashes(v, None):
                protos[code - 1] = v
                placed.append(code)
                break
        else:
            raise RankDeficiency("could not place an off-pair prototype")
    return protos


def _draw_encoder(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Seeded isometric embedding (orthonormal columns): full rank by
    construction and angle-preserving, so feature-space margins match the
    latent geometry on every seed."""
    for _ in range(_SET_RETRIES):
        raw = rng.standard_normal((rows, cols))
        if np.linalg.matrix_rank(raw) == min(rows, cols):
            q, r = np.linalg.qr(raw)
            # fix the gauge so the draw is unique given the seed
            return q * np.sign(np.diag(r))
    raise RankDeficiency(f"no full-rank {rows}x{cols} draw")


def generate_world(
    cfg: SyntheticWorldConfig, registry: ConfusingPairRegistry = DEFAULT_REGISTRY
) -> World:
    """Deterministically build the synthetic manifold for one seed."""
    rng = np.random.default_rng(cfg.seed)
    identities = rng.standard_normal((cfg.n_identities, cfg.latent_dim))
    prototypes = _draw_overlapping_directions(rng, cfg.latent_dim, cfg.overlap, registry)
    anchor_neutral = rng.standard_normal(cfg.embed_dim)
    anchor_dirs = _draw_overlapping_directions(rng, cfg.embed_dim, cfg.overlap, registry)
    anchors = anchor_neutral + ANCHOR_SCALE * anchor_dirs
    encoders = FrozenEncoders(
        feature_proj=_draw_encoder(rng, cfg.embed_dim, cfg.latent_dim),
        id_proj=_draw_encoder(rng, cfg.embed_dim, cfg.latent_dim),
    )
    return World(
        cfg=cfg,
        registry=registry,
        identities=identities,
        prototypes=prototypes,
        anchor_neutral=anchor_neutral,
        anchors=anchors,
        encoders=encoders,
    )


def world_to_tensors(world: World) -> tuple[dict[str, np.ndarray], dict]:
    arrays = {
        "identities": world.identities,
        "prototypes": world.prototypes,
        "anchor_neutral": world.anchor_neutral,
        "anchors": world.anchors,
        "feature_proj": world.encoders.feature_proj,
        "id_proj": world.encoders.id_proj,
    }
    meta = {
        "kind": "world",
        "latent_dim": world.cfg.latent_dim,
        "embed_dim": world.cfg.embed_dim,
        "n_identities": world.cfg.n_identities,
        "overlap": world.cfg.overlap,
        "noise_sigma": world.cfg.noise_sigma,
        "seed": world.cfg.seed,
        "registry": world.registry.to_list(),
    }
    return arrays, meta


def world_from_tensors(arrays: dict[str, np.ndarray], meta: dict) -> World:
    cfg = SyntheticWorldConfig(
        latent_dim=int(meta["latent_dim"]),
        embed_dim=int(meta["embed_dim"]),
        n_identities=int(meta["n_identities"]),
        overlap=float(meta["overlap"]),
        noise_sigma=float(meta["noise_sigma"]),
        seed=int(meta["seed"]),
    )
    return World(
        cfg=cfg,
        registry=ConfusingPairRegistry.from_list(meta["registry"]),
        identities=arrays["identities"],
        prototypes=arrays["prototypes"],
        anchor_neutral=arrays["anchor_neutral"],
        anchors=arrays["anchors"],
        encoders=FrozenEncoders(arrays["feature_proj"], arrays["id_proj"]),
    )
