"""Batch, layer, and batch-layer normalization on rank-2 activations.

All forwards take a (batch m, features d) tensor. Training forwards return
the output, a cache for the matching backward pass, and a functionally
updated copy of the running statistics; nothing is mutated in place.

Conventions that differ between the two statistic families and matter
everywhere below:
  * batch std includes epsilon inside the square root, so it is bounded
    away from zero;
  * feature std carries no epsilon, so constant rows hit 0/0 and are
    guarded (the normalized row is set to zero, see SIGMA_F_GUARD).
"""

import math
from dataclasses import dataclass

from .tensor import Tensor, ones, zeros

# below this, a feature-branch denominator is treated as exactly zero
SIGMA_F_GUARD = 1e-12


class UninitializedStatsError(ValueError):
    """Population statistics were requested before any batch was absorbed."""


@dataclass
class NormParams:
    """Learnable per-feature scale/shift plus layer hyperparameters.

    momentum is either a float in (0, 1] (exponential moving average) or
    the string "cumulative" (running arithmetic mean over absorbed batches).
    """

    gamma: Tensor
    beta: Tensor
    epsilon: float = 1e-4
    momentum: object = 0.9

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.gamma.shape != self.beta.shape or self.gamma.rank != 1:
            raise ValueError("gamma and beta must be equal-length vectors")
        _check_momentum(self.momentum)


def _check_momentum(momentum):
    if momentum == "cumulative":
        return
    if isinstance(momentum, (int, float)) and 0.0 < momentum <= 1.0:
        return
    raise ValueError(f"momentum must be in (0, 1] or 'cumulative', got {momentum!r}")


def init_params(d, epsilon=1e-4, momentum=0.9):
    """Fresh per-feature parameters: gamma ones, beta zeros."""
    return NormParams(ones([d]), zeros([d]), epsilon, momentum)


@dataclass
class BatchStats:
    """Per-feature mean and std over the batch axis (epsilon inside the std)."""

    mu_b: Tensor
    sigma_b: Tensor


@dataclass
class FeatureStats:
    """Per-sample mean and std over the feature axis (no epsilon term)."""

    mu_f: Tensor
    sigma_f: Tensor


@dataclass
class RunningStats:
    """Population estimates accumulated over training batches.

    e_mu_b / e_sigma_b are per-feature vectors; the feature-axis estimates
    are kept as batch-mean scalars because per-sample statistics have no
    stable identity across batches. batch_m records the size of the last
    absorbed batch for the m/(m-1) correction that has no live batch to
    read it from. Note the per-layer slot semantics: the batch-layer
    normalizer stores the running std in e_sigma_b, while the plain batch
    normalizer stores the running variance there (its inference transform
    is defined on variances).
    """

    e_mu_b: Tensor
    e_sigma_b: Tensor
    e_mu_f: float = 0.0
    e_sigma_f: float = 1.0
    count: int = 0
    batch_m: int = 0


def init_running(d):
    """Zero-count running stats: means 0, stds 1."""
    return RunningStats(zeros([d]), ones([d]))


@dataclass(frozen=True)
class InferenceFlags:
    """Population (True) vs current-batch (False) selection per statistic."""

    e_b: bool = False
    std_b: bool = False
    e_f: bool = False
    std_f: bool = False

    def as_tuple(self):
        return (self.e_b, self.std_b, self.e_f, self.std_f)

    def any(self):
        return self.e_b or self.std_b or self.e_f or self.std_f

    @classmethod
    def all_false(cls):
        return cls(False, False, False, False)

    @classmethod
    def from_index(cls, i):
        """Quadruple for index 0..15, counting binary with std_f least significant."""
        if not 0 <= i < 16:
            raise ValueError(f"flag index must be in [0, 16), got {i}")
        return cls(bool(i & 8), bool(i & 4), bool(i & 2), bool(i & 1))


@dataclass
class NormCache:
    """Intermediates saved by a forward pass for its backward pass."""

    kind: str
    m: int
    d: int
    gamma: Tensor
    x_hat: list                 # batch- or sample-normalized values, flat row-major
    inv_std: list               # per-feature (bn) or per-sample (ln) inverse std
    x_hh: list = None           # bln: feature-normalized values after the zero guard
    x_comb: list = None         # bln: blended and sqrt(d)-scaled values
    inv_std_f: list = None      # bln: per-sample inverse feature std (0.0 where guarded)
    w_batch: float = 0.0
    w_feat: float = 0.0


def _require_rank2(x):
    if x.rank != 2:
        raise ValueError(f"normalization expects a rank-2 input, got shape {x.shape}")
    return x.shape


def batch_stats(x, epsilon):
    """Per-feature batch mean and std with epsilon inside the square root."""
    m, d = _require_rank2(x)
    xd = x.data
    mu = [0.0] * d
    for i in range(m):
        base = i * d
        for k in range(d):
            mu[k] += xd[base + k]
    inv_m = 1.0 / m
    mu = [v * inv_m for v in mu]
    var = [0.0] * d
    for i in range(m):
        base = i * d
        for k in range(d):
            diff = xd[base + k] - mu[k]
            var[k] += diff * diff
    sigma = [math.sqrt(v * inv_m + epsilon) for v in var]
    return BatchStats(Tensor._wrap((d,), mu), Tensor._wrap((d,), sigma))


def feature_stats(x):
    """Per-sample feature mean and std; no epsilon, so constant rows give 0."""
    m, d = _require_rank2(x)
    xd = x.data
    mu = [0.0] * m
    sigma = [0.0] * m
    inv_d = 1.0 / d
    for i in range(m):
        row = xd[i * d:(i + 1) * d]
        mean = sum(row) * inv_d
        mu[i] = mean
        acc = 0.0
        for v in row:
            diff = v - mean
            acc += diff * diff
        sigma[i] = math.sqrt(acc * inv_d)
    return FeatureStats(Tensor._wrap((m,), mu), Tensor._wrap((m,), sigma))


def _blend_scalar(old, new, momentum, count):
    if count == 0:
        return new
    if momentum == "cumulative":
        return (count * old + new) / (count + 1)
    return momentum * old + (1.0 - momentum) * new


def _blend_vector(old, new, momentum, count):
    if count == 0:
        return list(new)
    if momentum == "cumulative":
        inv = 1.0 / (count + 1)
        return [(count * o + n) * inv for o, n in zip(old, new)]
    keep = momentum
    mix = 1.0 - momentum
    return [keep * o + mix * n for o, n in zip(old, new)]


def update_running(running, bstats, fstats, momentum):
    """Absorb one batch of statistics into the population estimates.

    The first batch initializes the estimates directly; afterwards the
    configured averaging rule applies. Feature statistics enter as their
    batch-mean scalars.
    """
    _check_momentum(momentum)
    count = running.count
    mu_b = _blend_vector(running.e_mu_b.data, bstats.mu_b.data, momentum, count)
    sigma_b = _blend_vector(running.e_sigma_b.data, bstats.sigma_b.data, momentum, count)
    m = fstats.mu_f.shape[0]
    mu_f_new = sum(fstats.mu_f.data) / m
    sigma_f_new = sum(fstats.sigma_f.data) / m
    mu_f = _blend_scalar(running.e_mu_f, mu_f_new, momentum, count)
    sigma_f = _blend_scalar(running.e_sigma_f, sigma_f_new, momentum, count)
    d = len(mu_b)
    return RunningStats(
        Tensor._wrap((d,), mu_b),
        Tensor._wrap((d,), sigma_b),
        mu_f,
        sigma_f,
        count + 1,
        m,
    )


def _bessel(m):
    # m/(m-1) is undefined for a single sample; fall back to no correction
    return m / (m - 1.0) if m > 1 else 1.0


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def bn_forward_train(x, params, running):
    """Batch normalization training forward; absorbs mean/variance estimates."""
    m, d = _require_rank2(x)
    if params.gamma.shape[0] != d:
        raise ValueError(f"parameter length {params.gamma.shape[0]} != feature count {d}")
    xd = x.data
    inv_m = 1.0 / m
    mu = [0.0] * d
    for i in range(m):
        base = i * d
        for k in range(d):
            mu[k] += xd[base + k]
    mu = [v * inv_m for v in mu]
    var = [0.0] * d
    for i in range(m):
        base = i * d
        for k in range(d):
            diff = xd[base + k] - mu[k]
            var[k] += diff * diff
    var = [v * inv_m for v in var]
    eps = params.epsilon
    inv_std = [1.0 / math.sqrt(v + eps) for v in var]

    g, b = params.gamma.data, params.beta.data
    x_hat = [0.0] * (m * d)
    y = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        for k in range(d):
            h = (xd[base + k] - mu[k]) * inv_std[k]
            x_hat[base + k] = h
            y[base + k] = g[k] * h + b[k]

    # this layer tracks variances, not stds, in its running slot
    count = running.count
    mom = params.momentum
    e_mu = _blend_vector(running.e_mu_b.data, mu, mom, count)
    e_var = _blend_vector(running.e_sigma_b.data, var, mom, count)
    new_running = RunningStats(
        Tensor._wrap((d,), e_mu),
        Tensor._wrap((d,), e_var),
        running.e_mu_f,
        running.e_sigma_f,
        count + 1,
        m,
    )
    cache = NormCache("bn", m, d, params.gamma, x_hat, inv_std)
    return Tensor._wrap((m, d), y), cache, new_running


def bn_forward_infer(x, params, running):
    """Batch normalization inference: a fixed per-feature linear map.

    Uses the population mean and the Bessel-corrected population variance;
    the correction uses the training batch size recorded at absorption.
    """
    m, d = _require_rank2(x)
    if running.count == 0:
        raise UninitializedStatsError("uninitialized population statistics")
    eps = params.epsilon
    factor = _bessel(running.batch_m)
    e_mu = running.e_mu_b.data
    e_var = running.e_sigma_b.data
    g, b = params.gamma.data, params.beta.data
    scale = [0.0] * d
    shift = [0.0] * d
    for k in range(d):
        denom = math.sqrt(factor * e_var[k] + eps)
        scale[k] = g[k] / denom
        shift[k] = b[k] - scale[k] * e_mu[k]
    xd = x.data
    y = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        for k in range(d):
            y[base + k] = scale[k] * xd[base + k] + shift[k]
    return Tensor._wrap((m, d), y)


def bn_backward(cache, dy):
    """Gradients of the batch-normalization training forward."""
    _check_cache(cache, "bn", dy)
    m, d = cache.m, cache.d
    g = cache.gamma.data
    x_hat, inv_std, dyd = cache.x_hat, cache.inv_std, dy.data

    dgamma = [0.0] * d
    dbeta = [0.0] * d
    sum_dh = [0.0] * d
    sum_dh_h = [0.0] * d
    for i in range(m):
        base = i * d
        for k in range(d):
            dv = dyd[base + k]
            h = x_hat[base + k]
            dgamma[k] += dv * h
            dbeta[k] += dv
            dh = dv * g[k]
            sum_dh[k] += dh
            sum_dh_h[k] += dh * h
    inv_m = 1.0 / m
    dx = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        for k in range(d):
            dh = dyd[base + k] * g[k]
            dx[base + k] = inv_std[k] * (
                dh - inv_m * sum_dh[k] - x_hat[base + k] * inv_m * sum_dh_h[k]
            )
    return (
        Tensor._wrap((m, d), dx),
        Tensor._wrap((d,), dgamma),
        Tensor._wrap((d,), dbeta),
    )


# ---------------------------------------------------------------------------
# layer normalization
# ---------------------------------------------------------------------------

def ln_forward(x, params):
    """Layer normalization forward; identical in training and inference."""
    m, d = _require_rank2(x)
    if params.gamma.shape[0] != d:
        raise ValueError(f"parameter length {params.gamma.shape[0]} != feature count {d}")
    eps = params.epsilon
    xd = x.data
    g, b = params.gamma.data, params.beta.data
    inv_d = 1.0 / d
    x_hat = [0.0] * (m * d)
    y = [0.0] * (m * d)
    inv_std = [0.0] * m
    for i in range(m):
        base = i * d
        row = xd[base:base + d]
        mean = sum(row) * inv_d
        acc = 0.0
        for v in row:
            diff = v - mean
            acc += diff * diff
        inv = 1.0 / math.sqrt(acc * inv_d + eps)
        inv_std[i] = inv
        for k in range(d):
            h = (row[k] - mean) * inv
            x_hat[base + k] = h
            y[base + k] = g[k] * h + b[k]
    cache = NormCache("ln", m, d, params.gamma, x_hat, inv_std)
    return Tensor._wrap((m, d), y), cache


def ln_backward(cache, dy):
    """Gradients of the layer-normalization forward."""
    _check_cache(cache, "ln", dy)
    m, d = cache.m, cache.d
    g = cache.gamma.data
    x_hat, inv_std, dyd = cache.x_hat, cache.inv_std, dy.data
    inv_d = 1.0 / d

    dgamma = [0.0] * d
    dbeta = [0.0] * d
    dx = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        sum_dh = 0.0
        sum_dh_h = 0.0
        for k in range(d):
            dv = dyd[base + k]
            h = x_hat[base + k]
            dgamma[k] += dv * h
            dbeta[k] += dv
            dh = dv * g[k]
            sum_dh += dh
            sum_dh_h += dh * h
        inv = inv_std[i]
        for k in range(d):
            dh = dyd[base + k] * g[k]
            dx[base + k] = inv * (
                dh - inv_d * sum_dh - x_hat[base + k] * inv_d * sum_dh_h
            )
    return (
        Tensor._wrap((m, d), dx),
        Tensor._wrap((d,), dgamma),
        Tensor._wrap((d,), dbeta),
    )


# ---------------------------------------------------------------------------
# batch-layer normalization
# ---------------------------------------------------------------------------

def bln_weights(m, epsilon):
    """Blend weights (w_batch, w_feat) for batch size m.

    w_feat = 1/m - eps and w_batch = 1 - (1/m + eps). w_batch is computed
    as (1 - 2*eps) - w_feat, the same real-valued expression grouped so
    that w_batch + w_feat == 1 - 2*eps holds exactly in float64.
    """
    if m < 1:
        raise ValueError("batch size must be >= 1")
    w_feat = 1.0 / m - epsilon
    w_batch = (1.0 - 2.0 * epsilon) - w_feat
    return w_batch, w_feat


def _bln_combine(x_hat, x_hh, m, d, params):
    w_batch, w_feat = bln_weights(m, params.epsilon)
    inv_root_d = 1.0 / math.sqrt(d)
    wb = w_batch * inv_root_d
    wf = w_feat * inv_root_d
    g, b = params.gamma.data, params.beta.data
    x_comb = [0.0] * (m * d)
    y = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        for k in range(d):
            c = wb * x_hat[base + k] + wf * x_hh[base + k]
            x_comb[base + k] = c
            y[base + k] = g[k] * c + b[k]
    return x_comb, y, w_batch, w_feat


def bln_forward_train(x, params, running):
    """Batch-layer normalization training forward.

    Normalizes on the batch axis and the feature axis independently, blends
    the two with the inverse-batch-size weights, divides by sqrt(d), and
    applies scale/shift. Running statistics absorb the batch.
    """
    m, d = _require_rank2(x)
    if params.gamma.shape[0] != d:
        raise ValueError(f"parameter length {params.gamma.shape[0]} != feature count {d}")
    bstats = batch_stats(x, params.epsilon)
    fstats = feature_stats(x)
    xd = x.data
    mu_b, sigma_b = bstats.mu_b.data, bstats.sigma_b.data
    mu_f, sigma_f = fstats.mu_f.data, fstats.sigma_f.data

    inv_std_b = [1.0 / s for s in sigma_b]
    inv_std_f = [0.0 if s < SIGMA_F_GUARD else 1.0 / s for s in sigma_f]

    x_hat = [0.0] * (m * d)
    x_hh = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        inv_f = inv_std_f[i]
        for k in range(d):
            v = xd[base + k]
            x_hat[base + k] = (v - mu_b[k]) * inv_std_b[k]
            x_hh[base + k] = (v - mu_f[i]) * inv_f

    x_comb, y, w_batch, w_feat = _bln_combine(x_hat, x_hh, m, d, params)
    new_running = update_running(running, bstats, fstats, params.momentum)
    cache = NormCache(
        "bln", m, d, params.gamma, x_hat, inv_std_b,
        x_hh=x_hh, x_comb=x_comb, inv_std_f=inv_std_f,
        w_batch=w_batch, w_feat=w_feat,
    )
    return Tensor._wrap((m, d), y), cache, new_running


def bln_forward_infer(x, params, running, flags):
    """Batch-layer normalization inference under a statistics configuration.

    Each flag selects the population estimate (True) or the current batch
    (False) for one of the four statistics. A False std is computed around
    whatever the matching mean selection produced. The m/(m-1) correction
    on population stds uses the current batch size; all-False reproduces
    the training forward bit for bit.
    """
    m, d = _require_rank2(x)
    if params.gamma.shape[0] != d:
        raise ValueError(f"parameter length {params.gamma.shape[0]} != feature count {d}")
    if flags.any() and running.count == 0:
        raise UninitializedStatsError("uninitialized population statistics")
    eps = params.epsilon
    xd = x.data
    inv_m = 1.0 / m
    inv_d = 1.0 / d
    factor = _bessel(m)

    if flags.e_b:
        e_b = list(running.e_mu_b.data)
    else:
        e_b = [0.0] * d
        for i in range(m):
            base = i * d
            for k in range(d):
                e_b[k] += xd[base + k]
        e_b = [v * inv_m for v in e_b]

    if flags.std_b:
        std_b = [factor * s for s in running.e_sigma_b.data]
    else:
        std_b = [0.0] * d
        for i in range(m):
            base = i * d
            for k in range(d):
                diff = xd[base + k] - e_b[k]
                std_b[k] += diff * diff
        std_b = [math.sqrt(v * inv_m + eps) for v in std_b]

    if flags.e_f:
        e_f = [running.e_mu_f] * m
    else:
        e_f = [sum(xd[i * d:(i + 1) * d]) * inv_d for i in range(m)]

    if flags.std_f:
        std_f = [factor * running.e_sigma_f] * m
    else:
        std_f = [0.0] * m
        for i in range(m):
            base = i * d
            acc = 0.0
            for k in range(d):
                diff = xd[base + k] - e_f[i]
                acc += diff * diff
            std_f[i] = math.sqrt(acc * inv_d)

    inv_std_b = [1.0 / s for s in std_b]
    inv_std_f = [0.0 if s < SIGMA_F_GUARD else 1.0 / s for s in std_f]
    x_hat = [0.0] * (m * d)
    x_hh = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        inv_f = inv_std_f[i]
        for k in range(d):
            v = xd[base + k]
            x_hat[base + k] = (v - e_b[k]) * inv_std_b[k]
            x_hh[base + k] = (v - e_f[i]) * inv_f
    _, y, _, _ = _bln_combine(x_hat, x_hh, m, d, params)
    return Tensor._wrap((m, d), y)


def bln_backward(cache, dy):
    """Gradients of the batch-layer-normalization training forward.

    The blend weights and 1/sqrt(d) are constants with respect to the
    input, so the gradient splits into the batch branch and the feature
    branch; guarded rows contribute nothing through the feature branch.
    """
    _check_cache(cache, "bln", dy)
    m, d = cache.m, cache.d
    g = cache.gamma.data
    dyd = dy.data
    inv_root_d = 1.0 / math.sqrt(d)
    wb = cache.w_batch * inv_root_d
    wf = cache.w_feat * inv_root_d
    x_hat, x_hh, x_comb = cache.x_hat, cache.x_hh, cache.x_comb
    inv_std_b, inv_std_f = cache.inv_std, cache.inv_std_f
    inv_m = 1.0 / m
    inv_d = 1.0 / d

    dgamma = [0.0] * d
    dbeta = [0.0] * d
    # batch branch accumulators (per feature)
    sum_db = [0.0] * d
    sum_db_h = [0.0] * d
    # feature branch accumulators (per sample)
    sum_df = [0.0] * m
    sum_df_h = [0.0] * m
    for i in range(m):
        base = i * d
        for k in range(d):
            dv = dyd[base + k]
            dgamma[k] += dv * x_comb[base + k]
            dbeta[k] += dv
            dc = dv * g[k]
            db = dc * wb
            df = dc * wf
            sum_db[k] += db
            sum_db_h[k] += db * x_hat[base + k]
            sum_df[i] += df
            sum_df_h[i] += df * x_hh[base + k]

    dx = [0.0] * (m * d)
    for i in range(m):
        base = i * d
        inv_f = inv_std_f[i]
        for k in range(d):
            dc = dyd[base + k] * g[k]
            db = dc * wb
            df = dc * wf
            grad = inv_std_b[k] * (
                db - inv_m * sum_db[k] - x_hat[base + k] * inv_m * sum_db_h[k]
            )
            if inv_f != 0.0:
                grad += inv_f * (
                    df - inv_d * sum_df[i] - x_hh[base + k] * inv_d * sum_df_h[i]
                )
            dx[base + k] = grad
    return (
        Tensor._wrap((m, d), dx),
        Tensor._wrap((d,), dgamma),
        Tensor._wrap((d,), dbeta),
    )


def _check_cache(cache, kind, dy):
    if cache.kind != kind:
        raise ValueError(f"cache kind {cache.kind!r} does not match backward {kind!r}")
    if dy.shape != (cache.m, cache.d):
        raise ValueError(f"gradient shape {dy.shape} does not match cache ({cache.m}, {cache.d})")
