"""Central finite-difference checks for every differentiable op and model path.

Small inputs are checked coordinate by coordinate.  Model-sized parameter
sets are checked along random directions: the analytic directional
derivative ``<grad, v>`` is compared with ``(f(x + h v) - f(x - h v)) / 2h``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensorgrad as tg
from .tensorgrad import DiffTensor

H = 1e-6


@dataclass
class CheckResult:
    name: str
    seed: int
    rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.rel_error) and self.rel_error < self.tol)


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def numeric_grad(fn: Callable[[], float], array: np.ndarray, h: float = H) -> np.ndarray:
    """Coordinate-wise central differences; ``array`` is perturbed in place and restored."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn()
        flat[i] = orig - h
        down = fn()
        flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return grad


def check_inputs(build: Callable[..., DiffTensor], arrays: list[np.ndarray], h: float = H) -> float:
    """Compare autograd and finite differences for a scalar function of ``arrays``."""
    leaves = [DiffTensor(a, requires_grad=True) for a in arrays]
    out = build(*leaves)
    tg.backward(out)
    worst = 0.0
    for leaf in leaves:

        def f():
            with tg.no_grad():
                return build(*leaves).item()

        num = numeric_grad(f, leaf.data, h)
        worst = max(worst, rel_error(leaf.grad, num))
    return worst


def check_directional(
    loss_fn: Callable[[], DiffTensor],
    params: list[DiffTensor],
    rng: np.random.Generator,
    directions: int = 3,
    h: float = H,
) -> float:
    """Directional-derivative check over a (possibly large) parameter list.

    Directions are unit-norm over the whole parameter set, so each probe
    moves the parameters by exactly ``h``.
    """
    for p in params:
        p.zero_grad()
    tg.backward(loss_fn())
    grads = [p.grad.copy() for p in params]
    analytic, numeric = [], []
    for _ in range(directions):
        vs = [rng.standard_normal(p.shape) for p in params]
        norm = np.sqrt(sum(float(np.sum(v * v)) for v in vs))
        vs = [v / norm for v in vs]
        analytic.append(sum(float(np.sum(g * v)) for g, v in zip(grads, vs)))
        originals = [p.data.copy() for p in params]
        with tg.no_grad():
            for p, o, v in zip(params, originals, vs):
                p.data = o + h * v
            up = loss_fn().item()
            for p, o, v in zip(params, originals, vs):
                p.data = o - h * v
            down = loss_fn().item()
        for p, o in zip(params, originals):
            p.data = o
        numeric.append((up - down) / (2 * h))
    return rel_error(np.array(analytic), np.array(numeric))


def _proj(out: DiffTensor, rng: np.random.Generator) -> DiffTensor:
    """Random linear functional, so non-scalar outputs have a generic gradient."""
    w = DiffTensor(rng.standard_normal(out.shape))
    return tg.reduce_sum(out * w)


# ----------------------------------------------------------------------------
# op-level checks: each returns the worst relative error for one seed


def _op_checks() -> dict[str, Callable[[np.random.Generator], float]]:
    def elementwise(kind):
        def run(rng):
            a = rng.standard_normal((3, 5))
            b = rng.standard_normal((3, 5))
            if kind in ("add", "mul", "sub", "div"):
                if kind == "div":
                    b = np.sign(b) * (np.abs(b) + 0.5)
                return check_inputs(lambda x, y: _proj(tg.elementwise(kind, x, y), np.random.default_rng(1)), [a, b])
            if kind == "scale":
                return check_inputs(lambda x: _proj(tg.scale(x, 1.7), np.random.default_rng(11)), [a])
            if kind == "prelu":
                return check_inputs(
                    lambda x, s: _proj(tg.prelu(x, s), np.random.default_rng(2)), [a, np.array([0.3])]
                )
            if kind in ("log", "sqrt"):
                a = np.abs(a) + 0.5
            return check_inputs(lambda x: _proj(tg.elementwise(kind, x), np.random.default_rng(3)), [a])

        return run

    def reduction(kind, axis):
        def run(rng):
            a = rng.standard_normal((4, 3, 5))
            return check_inputs(lambda x: _proj(tg.reduce(kind, x, axis), np.random.default_rng(4)), [a])

        return run

    def conv(causal, stride, dilation):
        def run(rng):
            x = rng.standard_normal((2, 4, 32))
            k = rng.standard_normal((8, 4, 3))
            return check_inputs(
                lambda a, b: _proj(tg.conv1d(a, b, stride, dilation, causal), np.random.default_rng(5)), [x, k]
            )

        return run

    def conv_t(rng):
        y = rng.standard_normal((2, 6, 9))
        k = rng.standard_normal((6, 3, 5))
        return check_inputs(lambda a, b: _proj(tg.conv_transpose1d(a, b, 2, 20), np.random.default_rng(6)), [y, k])

    def layer_norm(rng):
        x = rng.standard_normal((2, 5, 7))
        g = rng.standard_normal(5)
        b = rng.standard_normal(5)
        return check_inputs(lambda a, gg, bb: _proj(tg.channel_layer_norm(a, gg, bb), np.random.default_rng(7)), [x, g, b])

    def shapes(rng):
        x = rng.standard_normal((3, 4, 2))

        def build(a):
            t = tg.transpose(a, (2, 0, 1)).reshape(2, 12)
            s = tg.concat([t[:, :5], t[:, 5:]], axis=1)
            st = tg.stack([s, s * 2.0], axis=0)
            return _proj(tg.broadcast_to(st[..., None], (2, 2, 12, 3))[:, [1, 0]], np.random.default_rng(8))

        return check_inputs(build, [x])

    def matmul(rng):
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((4, 5))
        return check_inputs(lambda x, y: _proj(x @ y, np.random.default_rng(9)), [a, b])

    def cross_entropy(rng):
        z = rng.standard_normal((6, 4))
        labels = rng.integers(0, 4, 6)
        return check_inputs(lambda x: tg.cross_entropy(x, labels), [z])

    def composite(rng):
        x = rng.standard_normal((1, 3, 20))
        k = rng.standard_normal((4, 3, 3))
        return check_inputs(lambda a, b: tg.reduce_mean(tg.relu(tg.conv1d(a, b, causal=True))), [x, k])

    checks = {f"elementwise.{k}": elementwise(k) for k in
              ("relu", "sigmoid", "tanh", "prelu", "add", "mul", "sub", "div", "scale", "exp", "log", "sqrt")}
    for kind in ("sum", "mean", "sq_l2"):
        checks[f"reduce.{kind}"] = reduction(kind, None)
        checks[f"reduce.{kind}.axis"] = reduction(kind, (0, 2))
    checks["conv1d"] = conv(False, 1, 1)
    checks["conv1d.causal_dilated"] = conv(True, 1, 2)
    checks["conv1d.strided"] = conv(False, 2, 1)
    checks["conv_transpose1d"] = conv_t
    checks["channel_layer_norm"] = layer_norm
    checks["shape_ops"] = shapes
    checks["matmul"] = matmul
    checks["cross_entropy"] = cross_entropy
    checks["conv_relu_mean"] = composite
    return checks


# ----------------------------------------------------------------------------
# model-level checks


def tiny_separator_config(film: bool = False):
    from .models import SeparatorConfig

    return SeparatorConfig(
        num_sources=2, encoder_filters=8, kernel_size=8, stride=4, masker_channels=8,
        num_layers=4, group_size=2, film_enabled=film, embed_dim=6,
    )


def _jittered(model, rng: np.random.Generator):
    """Move every parameter off its initial value.

    Fresh zero biases put exact zeros on activation kinks in silent frames,
    where one-sided derivatives disagree.
    """
    for _, p in model.params:
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    return model


def _model_checks() -> dict[str, tuple[Callable[[np.random.Generator], float], float]]:
    from . import losses
    from .models import SeparationModel, SpectralConfig, SpectralEmbedder

    def encode(rng):
        m = SeparationModel(tiny_separator_config(), seed=int(rng.integers(2**31)))
        x = rng.standard_normal((2, 64))
        return check_inputs(lambda a: _proj(m.encode(a), np.random.default_rng(10)), [x])

    def end_to_end(rng):
        m = _jittered(SeparationModel(tiny_separator_config(), seed=int(rng.integers(2**31))), rng)
        x = rng.standard_normal((2, 64))
        proj = DiffTensor(rng.standard_normal((2, 2, 64)))
        params = [p for _, p in m.params]
        return check_directional(lambda: tg.reduce_sum(m.forward(x) * proj), params, rng)

    def conditioned(rng):
        m = _jittered(SeparationModel(tiny_separator_config(film=True), seed=int(rng.integers(2**31))), rng)
        x = rng.standard_normal((2, 64))
        emb = rng.standard_normal((2, 2, 6))
        proj = DiffTensor(rng.standard_normal((2, 2, 64)))
        params = [p for _, p in m.params]
        return check_directional(lambda: tg.reduce_sum(m.conditioned_forward(x, emb) * proj), params, rng)

    def spectral(rng):
        emb = SpectralEmbedder(SpectralConfig(win=32, hop=16, num_bands=6, sample_rate=8000))
        x = rng.standard_normal((1, 96)) * 0.1
        return check_inputs(lambda a: tg.reduce_sum(emb.embed_batch(a)), [x])

    def si_snr_loss(rng):
        est = rng.standard_normal((2, 2, 40))
        tgt = rng.standard_normal((2, 2, 40))
        assign = [losses.upit_assign(e, t) for e, t in zip(est, tgt)]
        return check_inputs(lambda e: losses.si_snr_loss(e, tgt, assign), [est])

    def objective(mode):
        def run(rng):
            m = _jittered(SeparationModel(tiny_separator_config(), seed=int(rng.integers(2**31))), rng)
            emb = SpectralEmbedder(SpectralConfig(win=32, hop=16, num_bands=6, sample_rate=8000))
            x = rng.standard_normal((2, 64)) * 0.3
            tgt = rng.standard_normal((2, 2, 64)) * 0.3
            cfg = losses.LossConfig.paper(mode)
            if mode == "triplet_like":
                # keep the hinge active so the check exercises the perceptual branch
                cfg.alpha = 10.0
            est0 = m.forward(x).data
            assign = [losses.upit_assign(e, t) for e, t in zip(est0, tgt)]
            perms = [a.permutation for a in assign]

            def loss():
                est = m.forward(x)
                # pairing frozen from the unperturbed pass: it is piecewise constant
                l_basic = losses.si_snr_loss(est, tgt, assign)
                clean = np.stack([t[list(p)] for t, p in zip(tgt, perms)])
                pos, neg = losses.pairwise_distances(emb.embed_batch(DiffTensor(clean)), emb.embed_batch(est))
                return losses.combined_loss(l_basic, losses.perceptual_loss(pos, neg, cfg), cfg)

            params = [p for _, p in m.params]
            return check_directional(loss, params, rng)

        return run

    return {
        "model.encode": (encode, 1e-5),
        "model.end_to_end": (end_to_end, 1e-5),
        "model.conditioned": (conditioned, 1e-5),
        "model.spectral_embed": (spectral, 1e-4),
        "loss.si_snr_loss": (si_snr_loss, 1e-4),
        "loss.objective.weighted_sum": (objective("weighted_sum"), 1e-4),
        "loss.objective.triplet_like": (objective("triplet_like"), 1e-4),
    }


def all_checks() -> dict[str, tuple[Callable[[np.random.Generator], float], float]]:
    checks = {name: (fn, 1e-5) for name, fn in _op_checks().items()}
    checks.update(_model_checks())
    return checks


def run_suite(seeds: int = 20, names: list[str] | None = None, log: Callable[[str], None] | None = None) -> list[CheckResult]:
    """Run every check for ``seeds`` seeds; returns one result per (check, seed)."""
    results = []
    t0 = time.perf_counter()
    for name, (fn, tol) in all_checks().items():
        if names is not None and name not in names:
            continue
        worst = None
        for seed in range(seeds):
            r = CheckResult(name, seed, fn(np.random.default_rng([seed, len(name)])), tol)
            results.append(r)
            if worst is None or r.rel_error > worst.rel_error:
                worst = r
        if log is not None and worst is not None:
            status = "ok" if all(x.passed for x in results if x.name == name) else "FAIL"
            log(f"{status:4s} {name:32s} max rel err {worst.rel_error:.2e} (tol {tol:.0e})")
    if log is not None:
        log(f"{len(results)} checks in {time.perf_counter() - t0:.1f}s")
    return results
