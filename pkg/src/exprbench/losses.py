"""Loss terms and their analytic gradients.

Covers the flow-matching velocity loss, three triplet formulations (hinge,
log-ratio, InfoNCE) over l2-normalized features, the symmetric contrastive
loss, the identity-preservation loss, and the weighted total objective.

Gradients are computed by hand (no autodiff) with respect to every raw input
vector, chaining through normalization and cosine terms; every formula is
cross-checked against central finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DimMismatch, NonFinite, ZeroVector

TRIPLET_MODES = ("hinge", "log_ratio", "infonce")

DEFAULT_MARGIN = 0.2
DEFAULT_EPSILON = 1e-6
DEFAULT_TAU = 0.07


@dataclass(frozen=True)
class TripletConfig:
    mode: str = "infonce"
    margin: float = DEFAULT_MARGIN
    epsilon: float = DEFAULT_EPSILON
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if self.mode not in TRIPLET_MODES:
            raise ValueError(f"mode must be one of {TRIPLET_MODES}, got {self.mode!r}")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")


@dataclass(frozen=True)
class LossWeights:
    lambda_sc: float = 1.0
    lambda_id: float = 0.1

    def __post_init__(self):
        if self.lambda_sc < 0 or self.lambda_id < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(eq=False)
class FeatureTriplet:
    """Generated / positive / negative feature vectors, pre-normalization."""

    g: np.ndarray
    p: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        self.g = _vec(self.g)
        self.p = _vec(self.p)
        self.n = _vec(self.n)
        if not (self.g.shape == self.p.shape == self.n.shape):
            raise DimMismatch(self.g.shape[0], self.p.shape[0])


def _vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected 1-D vector, got shape {v.shape}")
    return v


def normalize(e) -> np.ndarray:
    """Unit vector e / ||e||2; rejects zero vectors."""
    e = _vec(e)
    n = float(np.linalg.norm(e))
    if n == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    return e / n


def cosine_sim(a, b) -> float:
    a = _vec(a)
    b = _vec(b)
    if a.shape != b.shape:
        raise DimMismatch(a.shape[0], b.shape[0])
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.dot(a, b) / (na * nb))


def cosine_dist(a, b) -> float:
    """1 - cosine_sim; range [0, 2]."""
    return 1.0 - cosine_sim(a, b)


def _cos_with_grads(a: np.ndarray, b: np.ndarray):
    """cos(a,b) plus its gradients w.r.t. the raw (unnormalized) inputs."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    ah = a / na
    bh = b / nb
    s = float(np.dot(a, b) / (na * nb))
    ds_da = (bh - s * ah) / na
    ds_db = (ah - s * bh) / nb
    return s, ds_da, ds_db


def _softplus(z: float) -> float:
    if z >= 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _triplet_sims(t: FeatureTriplet):
    s_p, dsp_dg, dsp_dp = _cos_with_grads(t.g, t.p)
    s_n, dsn_dg, dsn_dn = _cos_with_grads(t.g, t.n)
    return s_p, s_n, dsp_dg, dsp_dp, dsn_dg, dsn_dn


def triplet_hinge(t: FeatureTriplet, cfg: TripletConfig) -> float:
    """max(0, d(g,p) - d(g,n) + margin) over cosine distances."""
    s_p = cosine_sim(t.g, t.p)
    s_n = cosine_sim(t.g, t.n)
    return max(0.0, (1.0 - s_p) - (1.0 - s_n) + cfg.margin)


def triplet_hinge_grad(t: FeatureTriplet, cfg: TripletConfig):
    """Hinge value and gradients; subgradient 0 exactly at the kink."""
    s_p, s_n, dsp_dg, dsp_dp, dsn_dg, dsn_dn = _triplet_sims(t)
    arg = (1.0 - s_p) - (1.0 - s_n) + cfg.margin
    if arg <= 0.0:
        z = np.zeros_like(t.g)
        return 0.0, {"g": z, "p": z.copy(), "n": z.copy()}
    # dT/ds_p = -1, dT/ds_n = +1 on the active side
    return arg, {"g": dsn_dg - dsp_dg, "p": -dsp_dp, "n": dsn_dn}


def triplet_logratio(t: FeatureTriplet, cfg: TripletConfig) -> float:
    """log((d(g,p)+eps)/(d(g,n)+eps)), computed as a difference of logs."""
    d_p = cosine_dist(t.g, t.p)
    d_n = cosine_dist(t.g, t.n)
    return math.log(d_p + cfg.epsilon) - math.log(d_n + cfg.epsilon)


def triplet_logratio_grad(t: FeatureTriplet, cfg: TripletConfig):
    s_p, s_n, dsp_dg, dsp_dp, dsn_dg, dsn_dn = _triplet_sims(t)
    d_p = 1.0 - s_p
    d_n = 1.0 - s_n
    value = math.log(d_p + cfg.epsilon) - math.log(d_n + cfg.epsilon)
    c_p = -1.0 / (d_p + cfg.epsilon)
    c_n = 1.0 / (d_n + cfg.epsilon)
    return value, {
        "g": c_p * dsp_dg + c_n * dsn_dg,
        "p": c_p * dsp_dp,
        "n": c_n * dsn_dn,
    }


def triplet_infonce(t: FeatureTriplet, cfg: TripletConfig) -> float:
    """-log(exp(s_p/tau) / (exp(s_p/tau) + exp(s_n/tau))).

    Evaluated as softplus((s_n - s_p)/tau), which is the same quantity in a
    form that cannot overflow at small temperatures.
    """
    s_p = cosine_sim(t.g, t.p)
    s_n = cosine_sim(t.g, t.n)
    return _softplus((s_n - s_p) / cfg.tau)


def triplet_infonce_grad(t: FeatureTriplet, cfg: TripletConfig):
    s_p, s_n, dsp_dg, dsp_dp, dsn_dg, dsn_dn = _triplet_sims(t)
    z = (s_n - s_p) / cfg.tau
    value = _softplus(z)
    sig = _sigmoid(z) / cfg.tau
    return value, {
        "g": sig * (dsn_dg - dsp_dg),
        "p": -sig * dsp_dp,
        "n": sig * dsn_dn,
    }


_TRIPLET_FNS = {
    "hinge": (triplet_hinge, triplet_hinge_grad),
    "log_ratio": (triplet_logratio, triplet_logratio_grad),
    "infonce": (triplet_infonce, triplet_infonce_grad),
}


def triplet(t: FeatureTriplet, cfg: TripletConfig) -> float:
    """Evaluate the configured triplet formulation."""
    return _TRIPLET_FNS[cfg.mode][0](t, cfg)


def triplet_grad(t: FeatureTriplet, cfg: TripletConfig):
    return _TRIPLET_FNS[cfg.mode][1](t, cfg)


def symmetric_contrastive(ga, pa, gb, pb, cfg: TripletConfig) -> float:
    """Half-sum of two triplet losses with positive/negative roles exchanged."""
    t_a = triplet(FeatureTriplet(ga, pa, pb), cfg)
    t_b = triplet(FeatureTriplet(gb, pb, pa), cfg)
    return 0.5 * (t_a + t_b)


def symmetric_contrastive_grad(ga, pa, gb, pb, cfg: TripletConfig):
    va, grads_a = triplet_grad(FeatureTriplet(ga, pa, pb), cfg)
    vb, grads_b = triplet_grad(FeatureTriplet(gb, pb, pa), cfg)
    value = 0.5 * (va + vb)
    return value, {
        "ga": 0.5 * grads_a["g"],
        "pa": 0.5 * (grads_a["p"] + grads_b["n"]),
        "gb": 0.5 * grads_b["g"],
        "pb": 0.5 * (grads_a["n"] + grads_b["p"]),
    }


def identity_loss(ga, pa, gb, pb) -> float:
    """0.5 * sum over branches of (1 - cos(generated, ground truth)); range [0,2]."""
    return 0.5 * ((1.0 - cosine_sim(ga, pa)) + (1.0 - cosine_sim(gb, pb)))


def identity_loss_grad(ga, pa, gb, pb):
    ga, pa, gb, pb = _vec(ga), _vec(pa), _vec(gb), _vec(pb)
    ca, dca_dga, dca_dpa = _cos_with_grads(ga, pa)
    cb, dcb_dgb, dcb_dpb = _cos_with_grads(gb, pb)
    value = 0.5 * ((1.0 - ca) + (1.0 - cb))
    return value, {
        "ga": -0.5 * dca_dga,
        "pa": -0.5 * dca_dpa,
        "gb": -0.5 * dcb_dgb,
        "pb": -0.5 * dcb_dpb,
    }


def flow_matching_loss(v_pred, x0, x1, reduction: str = "mean"):
    """Squared L2 norm of v_pred - (x1 - x0); mean over the batch axis.

    Inputs may be single vectors or (batch, dim) arrays. With
    reduction="none" the per-sample squared norms are returned.
    """
    v_pred = np.asarray(v_pred, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if not (v_pred.shape == x0.shape == x1.shape):
        raise DimMismatch(v_pred.shape[-1], x1.shape[-1])
    r = v_pred - (x1 - x0)
    per_sample = np.sum(np.atleast_2d(r) ** 2, axis=1)
    if reduction == "none":
        return per_sample if v_pred.ndim == 2 else float(per_sample[0])
    return float(np.mean(per_sample))


def flow_matching_grad(v_pred, x0, x1):
    """Mean-reduced loss with gradients w.r.t. all three inputs."""
    v_pred = np.asarray(v_pred, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if not (v_pred.shape == x0.shape == x1.shape):
        raise DimMismatch(v_pred.shape[-1], x1.shape[-1])
    r = v_pred - (x1 - x0)
    batch = r.shape[0] if r.ndim == 2 else 1
    value = float(np.sum(r * r) / batch)
    g = 2.0 * r / batch
    return value, {"v_pred": g, "x0": g.copy(), "x1": -g}


def total_loss(fm_a: float, fm_b: float, sc: float, id_: float, w: LossWeights) -> float:
    """0.5*(fm_a + fm_b) + lambda_sc * sc + lambda_id * id."""
    for name, v in (("fm_a", fm_a), ("fm_b", fm_b), ("sc", sc), ("id", id_)):
        if not math.isfinite(v):
            raise NonFinite(f"{name} is not finite: {v!r}")
    return 0.5 * (fm_a + fm_b) + w.lambda_sc * sc + w.lambda_id * id_


def gradient(kind: str, inputs: Mapping[str, np.ndarray], cfg: TripletConfig | None = None):
    """Dispatch to the analytic gradient of the named loss.

    Returns (value, dict of gradients keyed like `inputs`). Triplet kinds
    expect g/p/n; symmetric_contrastive and identity expect ga/pa/gb/pb;
    flow_matching expects v_pred/x0/x1.
    """
    if kind in TRIPLET_MODES:
        t = FeatureTriplet(inputs["g"], inputs["p"], inputs["n"])
        return _TRIPLET_FNS[kind][1](t, cfg or TripletConfig(mode=kind))
    if kind == "symmetric_contrastive":
        return symmetric_contrastive_grad(
            inputs["ga"], inputs["pa"], inputs["gb"], inputs["pb"], cfg or TripletConfig()
        )
    if kind == "identity":
        return identity_loss_grad(inputs["ga"], inputs["pa"], inputs["gb"], inputs["pb"])
    if kind == "flow_matching":
        return flow_matching_grad(inputs["v_pred"], inputs["x0"], inputs["x1"])
    raise ValueError(f"unknown loss kind: {kind!r}")
