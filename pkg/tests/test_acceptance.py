"""Acceptance criteria.

Each test prints one `[criterion N] ... PASS/FAIL` line (visible with -s or on
failure) and asserts the criterion at its stated tolerance. The training farm
(4 settings x 5 seeds at the default configuration) is shared across the
trend criteria.
"""

import json
import math
import time

import numpy as np
import pytest

from exprbench.affect import DEFAULT_REGISTRY, ExpressionId
from exprbench.cli import main
from exprbench.interp import interpolate, residual_direction
from exprbench.losses import (
    FeatureTriplet,
    LossWeights,
    TripletConfig,
    flow_matching_grad,
    flow_matching_loss,
    identity_loss,
    identity_loss_grad,
    symmetric_contrastive,
    triplet,
    triplet_grad,
    triplet_hinge,
    triplet_infonce,
    triplet_logratio,
)
from exprbench.metrics import (
    EvalRecord,
    TARGET_TWELVE,
    accuracy,
    bcr,
    build_confusion,
    cls_score,
    hes,
    mscr,
    pearson,
)
from exprbench.pipeline import mead_intensity
from exprbench.trainer import (
    EvalConfig,
    TrainingConfig,
    VelocityNet,
    batch_losses,
    make_batch,
)
from exprbench.trainer import train as train_model
from exprbench.world import SyntheticWorldConfig, generate_world

import oracles

F, S, A, D = ExpressionId.FEAR, ExpressionId.SURPRISED, ExpressionId.ANGRY, ExpressionId.DISGUST

SEEDS = (0, 1, 2, 3, 4)


def _criterion(num, name, ok, detail=""):
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


# ---------------------------------------------------------------- criterion 1


def _random_corpus(rng):
    n = int(rng.integers(50, 1000))
    records = []
    targets = [F, S, A, D] * 2 + [
        ExpressionId(int(c)) for c in rng.integers(1, 13, size=n)
    ]
    for k, target in enumerate(targets):
        records.append(
            EvalRecord(
                sample_id=f"r{k}",
                target=target,
                alpha=float(rng.integers(0, 4)) * 0.5,
                predicted=ExpressionId(int(rng.integers(1, 13))),
                s_e=float(rng.random()),
                id_sims=tuple(float(x) for x in rng.uniform(-1, 1, size=3)),
            )
        )
    # a few uniform alpha sweeps for CLS
    for sid in range(int(rng.integers(2, 6))):
        for step in range(5):
            records.append(
                EvalRecord(
                    sample_id=f"sweep{sid}",
                    target=F,
                    alpha=0.25 * step,
                    predicted=S,
                    s_e=float(rng.random()),
                    id_sims=(0.6,),
                )
            )
    return records


def test_criterion_01_metric_oracle_suite():
    start = time.time()
    rng = np.random.default_rng(20240811)
    worst = 0.0
    for _ in range(100):
        records = _random_corpus(rng)
        cm = build_confusion(records)
        for i, j in DEFAULT_REGISTRY.pairs:
            worst = max(worst, abs(bcr(cm, i, j) - oracles.brute_bcr(records, i, j)))
        worst = max(
            worst,
            abs(mscr(cm, DEFAULT_REGISTRY) - oracles.brute_mscr(records, DEFAULT_REGISTRY.pairs)),
        )
        worst = max(
            worst,
            abs(accuracy(records, TARGET_TWELVE) - oracles.brute_accuracy(records)),
        )
        hes_lib = [
            hes(r.s_e, min(max(oracles.brute_mean(r.id_sims), 0.0), 1.0)) for r in records
        ]
        hes_ref = [
            oracles.brute_hes(r.s_e, min(max(oracles.brute_mean(r.id_sims), 0.0), 1.0))
            for r in records
        ]
        worst = max(worst, abs(oracles.brute_mean(hes_lib) - oracles.brute_mean(hes_ref)))
        series = {}
        for r in records:
            if r.sample_id.startswith("sweep"):
                series.setdefault(r.sample_id, []).append((r.alpha, r.s_e))
        lib = cls_score(list(series.values()))
        ref_vals = [
            v
            for v in (oracles.brute_pearson([a for a, _ in s], [y for _, y in s])
                      for s in series.values())
            if v is not None
        ]
        worst = max(worst, abs(lib.value - oracles.brute_mean(ref_vals)))
    elapsed = time.time() - start
    ok = worst < 1e-12 and elapsed < 30.0
    _criterion(1, "metric oracle suite", ok, f"(max dev {worst:.2e}, {elapsed:.1f}s)")


# ---------------------------------------------------------------- criterion 2


def test_criterion_02_formula_fixtures():
    ok_hes = abs(hes(0.8, 0.6) - 0.685714) < 1e-6

    rng = np.random.default_rng(12)
    ok_sym = True
    for _ in range(50):
        records = _random_corpus(rng)
        cm = build_confusion(records)
        for i, j in DEFAULT_REGISTRY.pairs:
            ok_sym &= bcr(cm, i, j) == bcr(cm, j, i)

    collapse = []
    for k in range(5):
        collapse += [
            EvalRecord(f"f{k}", F, 1.0, F, 0.5),
            EvalRecord(f"s{k}", S, 1.0, F, 0.5),
            EvalRecord(f"a{k}", A, 1.0, A, 0.5),
            EvalRecord(f"d{k}", D, 1.0, A, 0.5),
        ]
    ok_collapse = abs(mscr(build_confusion(collapse), DEFAULT_REGISTRY) - 0.5) < 1e-12

    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    series = [list(zip(grid, grid)), list(zip(grid, [2 * a + 0.25 for a in grid]))]
    ok_cls = cls_score(series).value == 1.0

    ok = ok_hes and ok_sym and ok_collapse and ok_cls
    _criterion(2, "formula fixtures", ok,
               f"(hes={ok_hes} bcr-sym={ok_sym} collapse={ok_collapse} cls={ok_cls})")


# ---------------------------------------------------------------- criterion 3


def test_criterion_03_triplet_constants_and_identities():
    cfg = TripletConfig()
    ok_const = cfg.tau == 0.07 and cfg.margin == 0.2 and cfg.epsilon == 1e-6

    g = np.array([1.0, 0.0, 0.0])
    p = np.array([0.6, 0.8, 0.0])
    equal = FeatureTriplet(g, p, p.copy())
    ok_nce = abs(triplet_infonce(equal, cfg) - math.log(2.0)) < 1e-12
    ok_ratio = triplet_logratio(equal, TripletConfig(mode="log_ratio")) == 0.0

    hinge_cfg = TripletConfig(mode="hinge")
    inactive = FeatureTriplet(g, g.copy(), np.array([0.0, 1.0, 0.0]))
    # d_p=0, d_n=1: 0 - 1 + 0.2 < 0, inactive region
    ok_hinge = triplet_hinge(inactive, hinge_cfg) == 0.0

    ok = ok_const and ok_nce and ok_ratio and ok_hinge
    _criterion(3, "triplet constants and identities", ok,
               f"(defaults={ok_const} ln2={ok_nce} logratio0={ok_ratio} hinge0={ok_hinge})")


# ---------------------------------------------------------------- criterion 4


def _fd_check_inputs(loss_fn, grad_fn, rng, n_points, dims, skip=None):
    worst = 0.0
    checked = 0
    while checked < n_points:
        parts = rng.standard_normal((len(dims), dims[0]))
        if skip is not None and skip(parts):
            continue
        value, grads = grad_fn(parts)
        an = np.concatenate(grads)
        if 0.0 < np.linalg.norm(an) < 1e-7:
            continue  # below central-difference resolution at h=1e-5

        def f(flat, shape=parts.shape):
            return loss_fn(flat.reshape(shape))

        fd = oracles.central_diff(f, parts.reshape(-1), 1e-5)
        if np.linalg.norm(fd) < 1e-10 and np.linalg.norm(an) < 1e-10:
            checked += 1
            continue
        worst = max(worst, oracles.rel_err(fd, an))
        checked += 1
    return worst


def test_criterion_04_gradient_fidelity():
    start = time.time()
    rng = np.random.default_rng(99)
    dim = 6
    worst = {}

    for mode in ("hinge", "log_ratio", "infonce"):
        cfg = TripletConfig(mode=mode)

        def skip(parts, cfg=cfg, mode=mode):
            if mode != "hinge":
                return False
            g, p, n = parts
            s_p = float(np.dot(g, p) / (np.linalg.norm(g) * np.linalg.norm(p)))
            s_n = float(np.dot(g, n) / (np.linalg.norm(g) * np.linalg.norm(n)))
            return abs((1.0 - s_p) - (1.0 - s_n) + cfg.margin) <= 1e-6

        worst[mode] = _fd_check_inputs(
            lambda parts, cfg=cfg: triplet(FeatureTriplet(*parts), cfg),
            lambda parts, cfg=cfg: (
                lambda v_g: (v_g[0], (v_g[1]["g"], v_g[1]["p"], v_g[1]["n"]))
            )(triplet_grad(FeatureTriplet(*parts), cfg)),
            rng,
            100,
            (dim,) * 3,
            skip=skip,
        )

    worst["identity"] = _fd_check_inputs(
        lambda parts: identity_loss(*parts),
        lambda parts: (
            lambda v_g: (v_g[0], tuple(v_g[1][k] for k in ("ga", "pa", "gb", "pb")))
        )(identity_loss_grad(*parts)),
        rng,
        100,
        (dim,) * 4,
    )

    worst["flow_matching"] = _fd_check_inputs(
        lambda parts: flow_matching_loss(parts[0], parts[1], parts[2]),
        lambda parts: (
            lambda v_g: (v_g[0], tuple(v_g[1][k] for k in ("v_pred", "x0", "x1")))
        )(flow_matching_grad(parts[0], parts[1], parts[2])),
        rng,
        100,
        (dim,) * 3,
    )

    # full desk-trainer objective: directional derivatives at 100 random
    # (parameter, batch) points
    world = generate_world(SyntheticWorldConfig(seed=0, n_identities=8))
    net_rng = np.random.default_rng(0)
    net = VelocityNet(world.cfg.latent_dim, world.cfg.embed_dim, 16, net_rng)
    tcfg = TripletConfig()
    weights = LossWeights()
    theta0 = net.param_vector()
    worst_full = 0.0
    checked = 0
    h = 1e-5
    while checked < 100:
        theta = theta0 + 0.1 * net_rng.standard_normal(theta0.size)
        batch = make_batch(world, net_rng, list(range(8)))
        t = float(net_rng.random())
        net.set_param_vector(theta)
        _, grads = batch_losses(net, world, batch, tcfg, weights, t)
        g = VelocityNet.grads_to_vector(grads)
        u = net_rng.standard_normal(theta.size)
        u /= np.linalg.norm(u)
        an = float(np.dot(g, u))

        def loss_at(vec):
            net.set_param_vector(vec)
            breakdown, _ = batch_losses(net, world, batch, tcfg, weights, t, want_grads=False)
            return breakdown["total"]

        fd = (loss_at(theta + h * u) - loss_at(theta - h * u)) / (2.0 * h)
        if max(abs(fd), abs(an)) < 1e-8:
            checked += 1
            continue
        worst_full = max(worst_full, abs(fd - an) / max(abs(fd), abs(an)))
        checked += 1
    net.set_param_vector(theta0)
    worst["full_objective"] = worst_full

    elapsed = time.time() - start
    ok = all(w < 1e-4 for w in worst.values()) and elapsed < 60.0
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" ({elapsed:.1f}s)"
    _criterion(4, "gradient fidelity", ok, f"({detail})")


# ---------------------------------------------------------------- criterion 5


def test_criterion_05_interpolation_exactness():
    rng = np.random.default_rng(7)
    worst_end = 0.0
    worst_affine = 0.0
    for _ in range(1000):
        dim = int(rng.integers(2, 24))
        e = rng.standard_normal(dim) * 10.0
        tgt = rng.standard_normal(dim) * 10.0
        d = residual_direction(e, tgt)
        worst_end = max(worst_end, float(np.max(np.abs(interpolate(e, d, 0.0) - e))))
        worst_end = max(worst_end, float(np.max(np.abs(interpolate(e, d, 1.0) - tgt))))
        a = float(rng.random() * 1.5)
        b = float(rng.random() * 1.5)
        lam = float(rng.random())
        mixed = lam * a + (1.0 - lam) * b
        lhs = interpolate(e, d, mixed)
        rhs = lam * interpolate(e, d, a) + (1.0 - lam) * interpolate(e, d, b)
        worst_affine = max(worst_affine, float(np.max(np.abs(lhs - rhs))))
    ok = worst_end < 1e-12 and worst_affine < 1e-12
    _criterion(5, "interpolation exactness", ok,
               f"(endpoints {worst_end:.1e}, affine {worst_affine:.1e})")


# ---------------------------------------------------------------- criterion 6


def test_criterion_06_swap_symmetry():
    world = generate_world(SyntheticWorldConfig(seed=3, n_identities=12))
    rng = np.random.default_rng(3)
    net = VelocityNet(world.cfg.latent_dim, world.cfg.embed_dim, 16, rng)
    tcfg = TripletConfig()
    weights = LossWeights()
    ok = True
    for _ in range(100):
        ga, pa, gb, pb = rng.standard_normal((4, 8))
        ok &= symmetric_contrastive(ga, pa, gb, pb, tcfg) == symmetric_contrastive(
            gb, pb, ga, pa, tcfg
        )
        batch = make_batch(world, rng, list(range(12)))
        t = float(rng.random())
        fwd, _ = batch_losses(net, world, batch, tcfg, weights, t, want_grads=False)
        rev, _ = batch_losses(net, world, batch.swapped(), tcfg, weights, t, want_grads=False)
        ok &= fwd["total"] == rev["total"]
    _criterion(6, "a/b swap symmetry (exact, 100 batches)", ok)


# ------------------------------------------------------- criteria 7 and 8


@pytest.fixture(scope="module")
def training_farm():
    """Default-config runs: 4 settings x 5 seeds, plus untrained baselines."""
    start = time.time()
    farm = {"full": [], "nosc": [], "noid": [], "asym": [], "untrained": []}
    for seed in SEEDS:
        world = generate_world(SyntheticWorldConfig(seed=seed))
        tcfg = TripletConfig()
        ev = EvalConfig()
        tr = TrainingConfig(seed=seed, log_every=2000)
        farm["full"].append(train_model(world, tcfg, LossWeights(), tr, ev).report)
        farm["nosc"].append(
            train_model(world, tcfg, LossWeights(lambda_sc=0.0), tr, ev).report
        )
        farm["noid"].append(
            train_model(world, tcfg, LossWeights(lambda_id=0.0), tr, ev).report
        )
        farm["asym"].append(
            train_model(world, tcfg, LossWeights(), tr, ev, mode="asymmetric").report
        )
        untrained = TrainingConfig(steps=0, seed=seed)
        farm["untrained"].append(train_model(world, tcfg, LossWeights(), untrained, ev).report)
    farm["elapsed"] = time.time() - start
    return farm


def test_criterion_07_training_efficacy(training_farm):
    full = training_farm["full"]
    asym = training_farm["asym"]
    untrained = training_farm["untrained"]
    mean_cls = float(np.mean([r.cls12 for r in full]))
    mean_mscr = float(np.mean([r.mscr for r in full]))
    mean_u_cls = float(np.mean([r.cls12 for r in untrained]))
    sym_le_asym = sum(f.mscr <= a.mscr for f, a in zip(full, asym))
    elapsed = training_farm["elapsed"]
    ok = (
        mean_cls >= 0.9
        and mean_mscr <= 0.1
        and abs(mean_u_cls) < 0.3
        and sym_le_asym >= 4
        and elapsed < 600.0
    )
    _criterion(
        7,
        "desk training efficacy",
        ok,
        f"(CLS {mean_cls:.3f} mSCR {mean_mscr:.3f} untrained-CLS {mean_u_cls:+.3f} "
        f"sym<=asym {sym_le_asym}/5, farm {elapsed:.0f}s)",
    )


def test_criterion_08_ablation_directionality(training_farm):
    full = training_farm["full"]
    nosc = training_farm["nosc"]
    noid = training_farm["noid"]
    id_lower = sum(n.id_sim < f.id_sim for n, f in zip(noid, full))
    mscr_higher = sum(n.mscr > f.mscr for n, f in zip(nosc, full))
    ok = id_lower >= 4 and mscr_higher >= 4
    _criterion(
        8,
        "ablation directionality",
        ok,
        f"(id-loss ablation lowers ID {id_lower}/5, contrastive ablation raises mSCR {mscr_higher}/5)",
    )


# ---------------------------------------------------------------- criterion 9


def test_criterion_09_mead_adapter():
    ok = (
        mead_intensity("low") == 0.5
        and mead_intensity("medium") == 0.75
        and mead_intensity("high") == 1.0
    )
    _criterion(9, "MEAD intensity adapter", ok)


# --------------------------------------------------------------- criterion 10


def test_criterion_10_pipeline_determinism(tmp_path):
    lines = []
    for e in (F, S, A, D):
        scores = [0.0] * 12
        scores[e - 1] = 0.9
        for k in range(3):
            lines.append(
                json.dumps(
                    {
                        "sample_id": f"{e.label}{k}",
                        "target": e.label,
                        "alpha": 1.0,
                        "scores": scores,
                        "id_sims": [0.6, 0.7],
                    }
                )
            )
    pred = tmp_path / "pred.jsonl"
    pred.write_text("\n".join(lines) + "\n", encoding="utf-8")

    eval_outs = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        assert main(["eval", str(pred), "--out", str(out), "--deterministic"]) == 0
        eval_outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    ok_eval = eval_outs[0] == eval_outs[1]

    cfg = tmp_path / "run.ini"
    train_outs = []
    for name in ("t1", "t2"):
        out = tmp_path / name
        cfg.write_text(
            "\n".join(
                [
                    "[world]",
                    "n_identities = 12",
                    "[training]",
                    "steps = 200",
                    "hidden = 16",
                    "log_every = 50",
                    "[eval]",
                    "n_eval_identities = 4",
                    f"[io]\nout_dir = {out}",
                ]
            ),
            encoding="utf-8",
        )
        assert main(["train-toy", "--config", str(cfg), "--seed", "11", "--deterministic"]) == 0
        train_outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    ok_train = train_outs[0] == train_outs[1]

    ok = ok_eval and ok_train
    _criterion(10, "pipeline determinism", ok, f"(eval={ok_eval} train={ok_train})")
