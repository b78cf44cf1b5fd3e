"""Desk-scale symmetric joint training on the synthetic manifold.

A small tanh MLP velocity field is trained with the combined objective
(flow matching on both branches, symmetric contrastive loss on projected
features of one-step generations, identity loss on projected identity
features) using hand-derived gradients and an Adam update. Training is
single-threaded and bit-deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .affect import ExpressionId
from .errors import (
    DimMismatch,
    NonFiniteLoss,
    NoValidSeries,
    OutOfRange,
)
from .losses import (
    FeatureTriplet,
    LossWeights,
    TripletConfig,
    identity_loss_grad,
    symmetric_contrastive_grad,
    triplet_grad,
)
from . import metrics
from .metrics import EvalRecord, MetricReport
from .world import World

MODES = ("symmetric", "asymmetric")

_PARAM_ORDER = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 2000
    lr: float = 1e-3
    seed: int = 0
    mode: str = "symmetric"
    hidden: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 50

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.steps < 0 or self.lr <= 0 or self.hidden < 1 or self.log_every < 1:
            raise ValueError("bad training config")


@dataclass(frozen=True)
class EvalConfig:
    alpha_max: float = 1.5
    grid: int = 7
    n_eval_identities: int = 8
    acc_min_alpha: float = 0.5

    def __post_init__(self):
        if self.grid < 5:
            raise ValueError("alpha grid needs >= 5 points")
        if not (0.0 < self.alpha_max):
            raise ValueError("alpha_max must be positive")


class VelocityNet:
    """Two affine layers with tanh: v(x_t, t, e_cond) -> latent velocity."""

    def __init__(self, latent_dim: int, embed_dim: int, hidden: int, rng: np.random.Generator):
        self.latent_dim = latent_dim
        self.embed_dim = embed_dim
        self.hidden = hidden
        in_dim = latent_dim + 1 + embed_dim
        b1 = 1.0 / math.sqrt(in_dim)
        b2 = 1.0 / math.sqrt(hidden)
        self.w1 = rng.uniform(-b1, b1, size=(hidden, in_dim))
        self.b1 = rng.uniform(-b1, b1, size=hidden)
        self.w2 = rng.uniform(-b2, b2, size=(latent_dim, hidden))
        self.b2 = rng.uniform(-b2, b2, size=latent_dim)

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.params()[k].reshape(-1) for k in _PARAM_ORDER])

    def set_param_vector(self, vec: np.ndarray) -> None:
        offset = 0
        for k in _PARAM_ORDER:
            p = self.params()[k]
            p[...] = vec[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != vec.size:
            raise DimMismatch(offset, vec.size)

    @staticmethod
    def grads_to_vector(grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[k].reshape(-1) for k in _PARAM_ORDER])

    def _input(self, x_t: np.ndarray, t: float, e_cond: np.ndarray) -> np.ndarray:
        if x_t.shape[0] != self.latent_dim or e_cond.shape[0] != self.embed_dim:
            raise DimMismatch(x_t.shape[0], self.latent_dim)
        return np.concatenate([x_t, [t], e_cond])

    def forward(self, x_t: np.ndarray, t: float, e_cond: np.ndarray) -> np.ndarray:
        z = self._input(x_t, t, e_cond)
        h = np.tanh(self.w1 @ z + self.b1)
        return self.w2 @ h + self.b2

    def forward_cached(self, x_t: np.ndarray, t: float, e_cond: np.ndarray):
        z = self._input(x_t, t, e_cond)
        h = np.tanh(self.w1 @ z + self.b1)
        v = self.w2 @ h + self.b2
        return v, (z, h)

    def backward(self, cache, dv: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given dL/dv at the cached forward point."""
        z, h = cache
        dw2 = np.outer(dv, h)
        dh = self.w2.T @ dv
        da = (1.0 - h * h) * dh
        dw1 = np.outer(da, z)
        return {"w1": dw1, "b1": da, "w2": dw2, "b2": dv.copy()}

    def clone(self) -> "VelocityNet":
        dup = object.__new__(VelocityNet)
        dup.latent_dim = self.latent_dim
        dup.embed_dim = self.embed_dim
        dup.hidden = self.hidden
        dup.w1 = self.w1.copy()
        dup.b1 = self.b1.copy()
        dup.w2 = self.w2.copy()
        dup.b2 = self.b2.copy()
        return dup


class Adam:
    """First/second-moment adaptive update with bias correction."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


@dataclass(frozen=True)
class SymmetricBatch:
    """One training unit: neutral source plus a confusing-pair target duo."""

    identity: int
    x_src: np.ndarray
    x_a: np.ndarray
    x_b: np.ndarray
    expr_a: ExpressionId
    expr_b: ExpressionId
    alpha_a: float
    alpha_b: float

    def swapped(self) -> "SymmetricBatch":
        return SymmetricBatch(
            identity=self.identity,
            x_src=self.x_src,
            x_a=self.x_b,
            x_b=self.x_a,
            expr_a=self.expr_b,
            expr_b=self.expr_a,
            alpha_a=self.alpha_b,
            alpha_b=self.alpha_a,
        )


def make_batch(world: World, rng: np.random.Generator, train_ids: Sequence[int]) -> SymmetricBatch:
    """Sample one symmetric triplet; the pair keeps its canonical registry order."""
    identity = int(train_ids[rng.integers(len(train_ids))])
    expr_a, expr_b = world.registry.pairs[rng.integers(len(world.registry.pairs))]
    alpha_a = float(rng.random())
    alpha_b = float(rng.random())
    return SymmetricBatch(
        identity=identity,
        x_src=world.sample(identity, None, 0.0, rng),
        x_a=world.sample(identity, expr_a, alpha_a, rng),
        x_b=world.sample(identity, expr_b, alpha_b, rng),
        expr_a=expr_a,
        expr_b=expr_b,
        alpha_a=alpha_a,
        alpha_b=alpha_b,
    )


def one_step_generate(net: VelocityNet, x_t: np.ndarray, t: float, e_cond: np.ndarray) -> np.ndarray:
    """Flow estimate of the endpoint: x_t + (1 - t) * v(x_t, t, e_cond)."""
    if not (0.0 <= t < 1.0):
        raise OutOfRange("t", t)
    return x_t + (1.0 - t) * net.forward(x_t, t, e_cond)


def batch_losses(
    net: VelocityNet,
    world: World,
    batch: SymmetricBatch,
    tcfg: TripletConfig,
    weights: LossWeights,
    t: float,
    mode: str = "symmetric",
    want_grads: bool = True,
    alpha_max: float = 1.5,
):
    """Loss breakdown for one batch and, optionally, parameter gradients.

    `t` is shared across the two branches. Asymmetric mode applies the
    contrastive term to branch a only.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not (0.0 <= t < 1.0):
        raise OutOfRange("t", t)
    x0 = batch.x_src
    cond_a = world.encode_condition(batch.expr_a, batch.alpha_a, alpha_max)
    cond_b = world.encode_condition(batch.expr_b, batch.alpha_b, alpha_max)

    branches = []
    for x1, cond in ((batch.x_a, cond_a), (batch.x_b, cond_b)):
        x_t = (1.0 - t) * x0 + t * x1
        v, cache = net.forward_cached(x_t, t, cond)
        resid = v - (x1 - x0)
        fm = float(np.dot(resid, resid))
        xhat = x_t + (1.0 - t) * v
        branches.append({"x1": x1, "v": v, "cache": cache, "resid": resid, "fm": fm, "xhat": xhat})

    feat = world.encoders.feature_proj
    idp = world.encoders.id_proj
    zero_feat = np.zeros(feat.shape[0])
    if weights.lambda_sc == 0.0:
        sc = 0.0
        dsc_dga = dsc_dgb = zero_feat
    else:
        g_a = feat @ branches[0]["xhat"]
        p_a = feat @ batch.x_a
        g_b = feat @ branches[1]["xhat"]
        p_b = feat @ batch.x_b
        if mode == "symmetric":
            sc, sc_grads = symmetric_contrastive_grad(g_a, p_a, g_b, p_b, tcfg)
            dsc_dga, dsc_dgb = sc_grads["ga"], sc_grads["gb"]
        else:
            sc, t_grads = triplet_grad(FeatureTriplet(g_a, p_a, p_b), tcfg)
            dsc_dga = t_grads["g"]
            dsc_dgb = np.zeros_like(g_b)

    if weights.lambda_id == 0.0:
        idl = 0.0
        id_grads = {"ga": np.zeros(idp.shape[0]), "gb": np.zeros(idp.shape[0])}
    else:
        gid_a = idp @ branches[0]["xhat"]
        pid_a = idp @ batch.x_a
        gid_b = idp @ branches[1]["xhat"]
        pid_b = idp @ batch.x_b
        idl, id_grads = identity_loss_grad(gid_a, pid_a, gid_b, pid_b)

    fm_a, fm_b = branches[0]["fm"], branches[1]["fm"]
    total = 0.5 * (fm_a + fm_b) + weights.lambda_sc * sc + weights.lambda_id * idl
    breakdown = {"fm_a": fm_a, "fm_b": fm_b, "fm": 0.5 * (fm_a + fm_b),
                 "sc": sc, "id": idl, "total": total}
    if not want_grads:
        return breakdown, None

    step_scale = 1.0 - t
    d_sc = (dsc_dga, dsc_dgb)
    d_id = (id_grads["ga"], id_grads["gb"])
    grads: dict[str, np.ndarray] | None = None
    for i, br in enumerate(branches):
        dv = br["resid"].copy()  # d(0.5*fm_i)/dv = resid since fm_i = ||resid||^2
        dxhat = weights.lambda_sc * (feat.T @ d_sc[i]) + weights.lambda_id * (idp.T @ d_id[i])
        dv += step_scale * dxhat
        part = net.backward(br["cache"], dv)
        if grads is None:
            grads = part
        else:
            for k in grads:
                grads[k] += part[k]
    return breakdown, grads


def train_step(
    net: VelocityNet,
    batch: SymmetricBatch,
    world: World,
    tcfg: TripletConfig,
    weights: LossWeights,
    opt: Adam,
    t: float,
    mode: str = "symmetric",
    step_no: int = 0,
) -> dict[str, float]:
    """One gradient step; raises NonFiniteLoss with the breakdown on blow-up."""
    breakdown, grads = batch_losses(net, world, batch, tcfg, weights, t, mode)
    if not all(math.isfinite(v) for v in breakdown.values()):
        raise NonFiniteLoss(step_no, breakdown)
    opt.step(net.params(), grads)
    return breakdown


GenerateFn = Callable[[np.ndarray, ExpressionId, float], np.ndarray]


def net_generator(net: VelocityNet, world: World, alpha_max: float = 1.5) -> GenerateFn:
    """Generate from the source latent with a single flow step at t=0."""

    def gen(x_src: np.ndarray, expr: ExpressionId, alpha: float) -> np.ndarray:
        return one_step_generate(net, x_src, 0.0, world.encode_condition(expr, alpha, alpha_max))

    return gen


def oracle_generator(world: World, alpha_max: float = 1.5) -> GenerateFn:
    """Plug-in generator returning the clean ground-truth endpoint."""

    def gen(x_src: np.ndarray, expr: ExpressionId, alpha: float) -> np.ndarray:
        if not (0.0 <= alpha <= alpha_max):
            raise OutOfRange("alpha", alpha)
        return x_src + alpha * world.prototype(expr)

    return gen


def evaluate_synthetic(
    generate: GenerateFn,
    world: World,
    alpha_grid: Sequence[float],
    eval_ids: Sequence[int],
    acc_min_alpha: float = 0.5,
) -> tuple[MetricReport, list[EvalRecord]]:
    """Score a generator on the synthetic benchmark.

    For every held-out identity and registered expression, the generator is
    run across the alpha grid from the clean identity anchor. Classification
    is nearest-prototype cosine on the feature-space edit direction; the
    intensity score is the latent projection onto the target prototype,
    normalized by the top of the grid and clamped to [0,1]. Confusion and
    accuracy use only rows with alpha >= acc_min_alpha (weak edits are the
    domain of the linearity score); every row feeds its alpha series.
    """
    alpha_grid = [float(a) for a in alpha_grid]
    if len(alpha_grid) < 5:
        raise ValueError("alpha grid needs >= 5 points")
    alpha_top = max(alpha_grid)
    feat = world.encoders.feature_proj
    proto_feats = world.prototypes @ feat.T  # (12, m)
    proto_feat_norms = np.linalg.norm(proto_feats, axis=1)
    members = world.registry.members()

    records: list[EvalRecord] = []
    for identity in eval_ids:
        x_src = world.identities[identity]
        id_src = world.id_features(x_src)
        id_src_n = float(np.linalg.norm(id_src))
        for expr in members:
            proto = world.prototype(expr)
            for alpha in alpha_grid:
                xhat = generate(x_src, expr, alpha)
                delta = xhat - x_src
                fdelta = feat @ delta
                dn = float(np.linalg.norm(fdelta))
                if dn == 0.0:
                    sims = np.zeros(12)
                else:
                    sims = (proto_feats @ fdelta) / (proto_feat_norms * dn)
                pred = ExpressionId(int(np.argmax(sims)) + 1)
                score = min(max(float(np.dot(delta, proto)) / alpha_top, 0.0), 1.0)
                gid = world.id_features(xhat)
                gn = float(np.linalg.norm(gid))
                id_sim = 0.0 if gn == 0.0 or id_src_n == 0.0 else float(
                    np.dot(gid, id_src) / (gn * id_src_n)
                )
                id_sim = min(max(id_sim, -1.0), 1.0)
                records.append(
                    EvalRecord(
                        sample_id=f"id{identity:03d}",
                        target=expr,
                        alpha=alpha,
                        predicted=pred,
                        s_e=score,
                        id_sims=(id_sim,),
                    )
                )

    strong = [r for r in records if r.alpha >= acc_min_alpha]
    cm = metrics.build_confusion(strong)
    mscr_val = metrics.mscr(cm, world.registry)
    acc12 = metrics.accuracy(strong, metrics.TARGET_TWELVE)
    basic = frozenset(metrics.BASIC_SIX)
    strong_basic = [r for r in strong if r.target in basic]
    acc6 = metrics.accuracy(strong_basic, metrics.BASIC_SIX) if strong_basic else None

    id_means = [metrics.identity_similarity(r.id_sims).raw for r in records]
    id_sim_mean = math.fsum(id_means) / len(id_means)
    hes_vals = [
        metrics.hes(r.s_e, metrics.identity_similarity(r.id_sims).hes_facing) for r in records
    ]
    hes_mean = math.fsum(hes_vals) / len(hes_vals)

    groups = metrics.group_alpha_series(records)
    cls12 = cls6 = None
    n_series = n_skipped = 0
    notes: list[str] = []
    try:
        res = metrics.cls_score(list(groups.values()))
        cls12 = res.value
        n_series, n_skipped = res.n_used, res.n_skipped
    except NoValidSeries as exc:
        n_skipped = exc.skipped
        notes.append("all alpha series degenerate")
    basic_series = [v for (sid, tgt), v in groups.items() if tgt in basic]
    if basic_series and cls12 is not None:
        try:
            cls6 = metrics.cls_score(basic_series).value
        except NoValidSeries:
            pass

    report = MetricReport(
        mscr=mscr_val,
        acc12=acc12,
        acc6=acc6,
        id_sim=id_sim_mean,
        hes_mean=hes_mean,
        hes_of_means=None,
        cls6=cls6,
        cls12=cls12,
        id_flag=metrics.id_regime(id_sim_mean),
        n_records=len(records),
        cls_series=n_series,
        cls_skipped=n_skipped,
        notes=tuple(notes),
    )
    return report, records


@dataclass
class TrainResult:
    net: VelocityNet
    curve: list[dict] = field(default_factory=list)
    report: MetricReport | None = None
    records: list[EvalRecord] = field(default_factory=list)


def train(
    world: World,
    tcfg: TripletConfig,
    weights: LossWeights,
    tr: TrainingConfig,
    ev: EvalConfig,
    mode: str | None = None,
) -> TrainResult:
    """Run the full training loop and evaluate on held-out identities.

    The curve holds one row per log point with the loss breakdown and the
    synthetic benchmark snapshot (mSCR and CLS may be None very early when
    every intensity series is still flat).
    """
    mode = mode or tr.mode
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rng = np.random.default_rng(tr.seed)
    net = VelocityNet(world.cfg.latent_dim, world.cfg.embed_dim, tr.hidden, rng)
    opt = Adam(net.params(), tr.lr, tr.beta1, tr.beta2, tr.adam_eps)
    n_id = world.cfg.n_identities
    n_eval = min(ev.n_eval_identities, n_id - 1)
    train_ids = list(range(n_id - n_eval))
    eval_ids = list(range(n_id - n_eval, n_id))
    grid = np.linspace(0.0, ev.alpha_max, ev.grid)

    curve: list[dict] = []
    for step in range(1, tr.steps + 1):
        batch = make_batch(world, rng, train_ids)
        t = float(rng.random())
        breakdown = train_step(net, batch, world, tcfg, weights, opt, t, mode, step_no=step)
        if step % tr.log_every == 0 or step == tr.steps:
            rep, _ = evaluate_synthetic(
                net_generator(net, world, ev.alpha_max), world, grid, eval_ids, ev.acc_min_alpha
            )
            curve.append(
                {
                    "step": step,
                    "L_total": breakdown["total"],
                    "L_FM": breakdown["fm"],
                    "L_SC": breakdown["sc"],
                    "L_ID": breakdown["id"],
                    "mSCR": rep.mscr,
                    "CLS": rep.cls12,
                }
            )

    report, records = evaluate_synthetic(
        net_generator(net, world, ev.alpha_max), world, grid, eval_ids, ev.acc_min_alpha
    )
    return TrainResult(net=net, curve=curve, report=report, records=records)


def net_to_tensors(net: VelocityNet) -> tuple[dict[str, np.ndarray], dict]:
    arrays = {k: v for k, v in net.params().items()}
    meta = {
        "kind": "velocity_net",
        "latent_dim": net.latent_dim,
        "embed_dim": net.embed_dim,
        "hidden": net.hidden,
    }
    return arrays, meta


def net_from_tensors(arrays: dict[str, np.ndarray], meta: dict) -> VelocityNet:
    net = object.__new__(VelocityNet)
    net.latent_dim = int(meta["latent_dim"])
    net.embed_dim = int(meta["embed_dim"])
    net.hidden = int(meta["hidden"])
    net.w1 = arrays["w1"].copy()
    net.b1 = arrays["b1"].copy()
    net.w2 = arrays["w2"].copy()
    net.b2 = arrays["b2"].copy()
    return net
