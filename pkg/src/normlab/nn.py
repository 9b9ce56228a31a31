"""Layers, losses, Adam, and the small training harness.

Layers follow one protocol: forward returns (output, cache), backward takes
(cache, upstream gradient) and returns (input gradient, parameter gradient
dict). Parameters live on the layer and are replaced functionally by the
optimizer; nothing shares mutable buffers.
"""

import math

from .tensor import Rng, Tensor, matmul, randn, reshape, take, transpose2d, zeros
from . import norm as _norm
from .norm import InferenceFlags, init_params, init_running


class Dense:
    """Affine map y = x W + b."""

    kind = "dense"

    def __init__(self, in_dim, out_dim, rng=None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            rng = Rng(0)
        scale = 1.0 / math.sqrt(in_dim)
        self.w = randn([in_dim, out_dim], rng) * scale
        self.b = zeros([out_dim])

    def forward(self, x, train=True, flags=None, update_stats=True):
        y = matmul(x, self.w) + _broadcast_row(self.b, x.shape[0])
        return y, x

    def backward(self, cache, dy):
        x = cache
        dw = matmul(transpose2d(x), dy)
        db = _col_sum(dy)
        dx = matmul(dy, transpose2d(self.w))
        return dx, {"w": dw, "b": db}

    def params(self):
        return {"w": self.w, "b": self.b}

    def set_param(self, name, value):
        setattr(self, name, value)

    def describe(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim}


class Conv2d:
    """2D convolution, stride 1, valid padding."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel, rng=None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        if rng is None:
            rng = Rng(0)
        scale = 1.0 / math.sqrt(in_channels * kernel * kernel)
        self.w = randn([out_channels, in_channels, kernel, kernel], rng) * scale
        self.b = zeros([out_channels])

    def forward(self, x, train=True, flags=None, update_stats=True):
        m, cin, h, w = x.shape
        if cin != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {cin}")
        k = self.kernel
        oh, ow = h - k + 1, w - k + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"kernel {k} too large for input {h}x{w}")
        cout = self.out_channels
        xd, wd, bd = x.data, self.w.data, self.b.data
        out = [0.0] * (m * cout * oh * ow)
        for s in range(m):
            sbase = s * cin * h * w
            obase_s = s * cout * oh * ow
            for oc in range(cout):
                wbase_oc = oc * cin * k * k
                obase = obase_s + oc * oh * ow
                bias = bd[oc]
                for oy in range(oh):
                    for ox in range(ow):
                        acc = bias
                        for ic in range(cin):
                            xbase = sbase + ic * h * w
                            wbase = wbase_oc + ic * k * k
                            for ky in range(k):
                                xrow = xbase + (oy + ky) * w + ox
                                wrow = wbase + ky * k
                                for kx in range(k):
                                    acc += xd[xrow + kx] * wd[wrow + kx]
                        out[obase + oy * ow + ox] = acc
        return Tensor._wrap((m, cout, oh, ow), out), x

    def backward(self, cache, dy):
        x = cache
        m, cin, h, w = x.shape
        k = self.kernel
        cout = self.out_channels
        _, _, oh, ow = dy.shape
        xd, wd, dyd = x.data, self.w.data, dy.data
        dwd = [0.0] * len(wd)
        dbd = [0.0] * cout
        dxd = [0.0] * len(xd)
        for s in range(m):
            sbase = s * cin * h * w
            obase_s = s * cout * oh * ow
            for oc in range(cout):
                wbase_oc = oc * cin * k * k
                obase = obase_s + oc * oh * ow
                for oy in range(oh):
                    for ox in range(ow):
                        g = dyd[obase + oy * ow + ox]
                        if g == 0.0:
                            continue
                        dbd[oc] += g
                        for ic in range(cin):
                            xbase = sbase + ic * h * w
                            wbase = wbase_oc + ic * k * k
                            for ky in range(k):
                                xrow = xbase + (oy + ky) * w + ox
                                wrow = wbase + ky * k
                                for kx in range(k):
                                    dwd[wrow + kx] += g * xd[xrow + kx]
                                    dxd[xrow + kx] += g * wd[wrow + kx]
        return (
            Tensor._wrap(x.shape, dxd),
            {
                "w": Tensor._wrap(self.w.shape, dwd),
                "b": Tensor._wrap((cout,), dbd),
            },
        )

    def params(self):
        return {"w": self.w, "b": self.b}

    def set_param(self, name, value):
        setattr(self, name, value)

    def describe(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
        }


class AvgPool2x2:
    """2x2 average pooling with stride 2; spatial dims must be even."""

    kind = "avgpool2x2"

    def forward(self, x, train=True, flags=None, update_stats=True):
        m, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"avgpool2x2 needs even spatial dims, got {h}x{w}")
        oh, ow = h // 2, w // 2
        xd = x.data
        out = [0.0] * (m * c * oh * ow)
        for s in range(m):
            for ch in range(c):
                ibase = (s * c + ch) * h * w
                obase = (s * c + ch) * oh * ow
                for oy in range(oh):
                    r0 = ibase + 2 * oy * w
                    r1 = r0 + w
                    for ox in range(ow):
                        col = 2 * ox
                        out[obase + oy * ow + ox] = 0.25 * (
                            xd[r0 + col] + xd[r0 + col + 1] + xd[r1 + col] + xd[r1 + col + 1]
                        )
        return Tensor._wrap((m, c, oh, ow), out), x.shape

    def backward(self, cache, dy):
        m, c, h, w = cache
        oh, ow = h // 2, w // 2
        dyd = dy.data
        dxd = [0.0] * (m * c * h * w)
        for s in range(m):
            for ch in range(c):
                ibase = (s * c + ch) * h * w
                obase = (s * c + ch) * oh * ow
                for oy in range(oh):
                    r0 = ibase + 2 * oy * w
                    r1 = r0 + w
                    for ox in range(ow):
                        g = 0.25 * dyd[obase + oy * ow + ox]
                        col = 2 * ox
                        dxd[r0 + col] = g
                        dxd[r0 + col + 1] = g
                        dxd[r1 + col] = g
                        dxd[r1 + col + 1] = g
        return Tensor._wrap((m, c, h, w), dxd), {}

    def params(self):
        return {}

    def set_param(self, name, value):
        raise KeyError(name)

    def describe(self):
        return {"kind": self.kind}


class Flatten:
    """Collapse all non-batch axes into one feature axis."""

    kind = "flatten"

    def forward(self, x, train=True, flags=None, update_stats=True):
        m = x.shape[0]
        return reshape(x, (m, x.size // m)), x.shape

    def backward(self, cache, dy):
        return reshape(dy, cache), {}

    def params(self):
        return {}

    def set_param(self, name, value):
        raise KeyError(name)

    def describe(self):
        return {"kind": self.kind}


def _relu(v):
    return v if v > 0.0 else 0.0


class Activation:
    """Elementwise nonlinearity: relu, tanh, sigmoid, or rowwise softmax."""

    kind = "activation"
    NAMES = ("relu", "tanh", "sigmoid", "softmax")

    def __init__(self, name):
        if name not in self.NAMES:
            raise ValueError(f"unknown activation {name!r}")
        self.name = name

    def forward(self, x, train=True, flags=None, update_stats=True):
        if self.name == "relu":
            y = Tensor._wrap(x.shape, [_relu(v) for v in x.data])
            return y, x
        if self.name == "tanh":
            y = Tensor._wrap(x.shape, [math.tanh(v) for v in x.data])
            return y, y
        if self.name == "sigmoid":
            y = Tensor._wrap(x.shape, [1.0 / (1.0 + math.exp(-v)) for v in x.data])
            return y, y
        y = softmax(x)
        return y, y

    def backward(self, cache, dy):
        if self.name == "relu":
            x = cache
            dx = [g if v > 0.0 else 0.0 for v, g in zip(x.data, dy.data)]
            return Tensor._wrap(x.shape, dx), {}
        if self.name == "tanh":
            y = cache
            dx = [g * (1.0 - t * t) for t, g in zip(y.data, dy.data)]
            return Tensor._wrap(y.shape, dx), {}
        if self.name == "sigmoid":
            y = cache
            dx = [g * s * (1.0 - s) for s, g in zip(y.data, dy.data)]
            return Tensor._wrap(y.shape, dx), {}
        return softmax_backward(cache, dy), {}

    def params(self):
        return {}

    def set_param(self, name, value):
        raise KeyError(name)

    def describe(self):
        return {"kind": self.kind, "name": self.name}


class RnnCell:
    """Tanh recurrence over (batch, time, features); emits the last hidden state."""

    kind = "rnn-cell"

    def __init__(self, in_dim, hidden, rng=None):
        self.in_dim = in_dim
        self.hidden = hidden
        if rng is None:
            rng = Rng(0)
        self.w_xh = randn([in_dim, hidden], rng) * (1.0 / math.sqrt(in_dim))
        self.w_hh = randn([hidden, hidden], rng) * (1.0 / math.sqrt(hidden))
        self.b = zeros([hidden])

    def forward(self, x, train=True, flags=None, update_stats=True):
        m, steps, v = x.shape
        if v != self.in_dim:
            raise ValueError(f"expected {self.in_dim} input features, got {v}")
        h = zeros([m, self.hidden])
        xs = []
        hs = [h]
        bias = _broadcast_row(self.b, m)
        for t in range(steps):
            xt = Tensor._wrap((m, v), [x.data[(s * steps + t) * v + j] for s in range(m) for j in range(v)])
            xs.append(xt)
            pre = matmul(xt, self.w_xh) + matmul(h, self.w_hh) + bias
            h = Tensor._wrap(pre.shape, [math.tanh(u) for u in pre.data])
            hs.append(h)
        return h, (x.shape, xs, hs)

    def backward(self, cache, dy):
        (m, steps, v), xs, hs = cache
        hidden = self.hidden
        dw_xh = zeros([v, hidden])
        dw_hh = zeros([hidden, hidden])
        db = zeros([hidden])
        dxd = [0.0] * (m * steps * v)
        dh = dy
        w_xh_t = transpose2d(self.w_xh)
        w_hh_t = transpose2d(self.w_hh)
        for t in range(steps - 1, -1, -1):
            ht = hs[t + 1]
            da = Tensor._wrap(
                (m, hidden),
                [g * (1.0 - u * u) for u, g in zip(ht.data, dh.data)],
            )
            dw_xh = dw_xh + matmul(transpose2d(xs[t]), da)
            dw_hh = dw_hh + matmul(transpose2d(hs[t]), da)
            db = db + _col_sum(da)
            dxt = matmul(da, w_xh_t)
            for s in range(m):
                base = (s * steps + t) * v
                row = s * v
                for j in range(v):
                    dxd[base + j] = dxt.data[row + j]
            dh = matmul(da, w_hh_t)
        return (
            Tensor._wrap((m, steps, v), dxd),
            {"w_xh": dw_xh, "w_hh": dw_hh, "b": db},
        )

    def params(self):
        return {"w_xh": self.w_xh, "w_hh": self.w_hh, "b": self.b}

    def set_param(self, name, value):
        setattr(self, name, value)

    def describe(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "hidden": self.hidden}


class Normalizer:
    """Normalization layer wrapping one of the three schemes.

    Inputs of rank > 2 are flattened to (batch, features) for the transform
    and restored afterwards; the feature count is the flattened size.
    """

    kind = "normalizer"
    SCHEMES = ("bn", "ln", "bln")

    def __init__(self, scheme, d, epsilon=1e-4, momentum=0.9):
        if scheme not in self.SCHEMES:
            raise ValueError(f"unknown normalization scheme {scheme!r}")
        self.scheme = scheme
        self.d = d
        self.norm_params = init_params(d, epsilon, momentum)
        self.running = init_running(d)

    def forward(self, x, train=True, flags=None, update_stats=True):
        orig = x.shape
        flat = x if x.rank == 2 else reshape(x, (orig[0], x.size // orig[0]))
        if flat.shape[1] != self.d:
            raise ValueError(f"expected {self.d} features, got {flat.shape[1]}")
        if train:
            if self.scheme == "bn":
                y, cache, new_running = _norm.bn_forward_train(flat, self.norm_params, self.running)
            elif self.scheme == "ln":
                y, cache = _norm.ln_forward(flat, self.norm_params)
                new_running = self.running
            else:
                y, cache, new_running = _norm.bln_forward_train(flat, self.norm_params, self.running)
            if update_stats:
                self.running = new_running
            out = y if x.rank == 2 else reshape(y, orig)
            return out, (cache, orig)
        if self.scheme == "bn":
            y = _norm.bn_forward_infer(flat, self.norm_params, self.running)
        elif self.scheme == "ln":
            y, _ = _norm.ln_forward(flat, self.norm_params)
        else:
            y = _norm.bln_forward_infer(
                flat, self.norm_params, self.running,
                flags if flags is not None else InferenceFlags.all_false(),
            )
        out = y if x.rank == 2 else reshape(y, orig)
        return out, (None, orig)

    def backward(self, cache, dy):
        norm_cache, orig = cache
        if norm_cache is None:
            raise ValueError("no backward pass through an inference-mode forward")
        flat_dy = dy if dy.rank == 2 else reshape(dy, (orig[0], dy.size // orig[0]))
        if self.scheme == "bn":
            dx, dgamma, dbeta = _norm.bn_backward(norm_cache, flat_dy)
        elif self.scheme == "ln":
            dx, dgamma, dbeta = _norm.ln_backward(norm_cache, flat_dy)
        else:
            dx, dgamma, dbeta = _norm.bln_backward(norm_cache, flat_dy)
        if dy.rank != 2:
            dx = reshape(dx, orig)
        return dx, {"gamma": dgamma, "beta": dbeta}

    def params(self):
        return {"gamma": self.norm_params.gamma, "beta": self.norm_params.beta}

    def set_param(self, name, value):
        if name == "gamma":
            self.norm_params.gamma = value
        elif name == "beta":
            self.norm_params.beta = value
        else:
            raise KeyError(name)

    def describe(self):
        return {
            "kind": self.kind,
            "scheme": self.scheme,
            "d": self.d,
            "epsilon": self.norm_params.epsilon,
            "momentum": self.norm_params.momentum,
        }


_LAYER_TYPES = {
    "dense": Dense,
    "conv2d": Conv2d,
    "avgpool2x2": AvgPool2x2,
    "flatten": Flatten,
    "activation": Activation,
    "rnn-cell": RnnCell,
    "normalizer": Normalizer,
}


def layer_from_descriptor(desc):
    """Rebuild a layer from its describe() dict (parameters left at init)."""
    desc = dict(desc)
    kind = desc.pop("kind")
    if kind == "dense":
        return Dense(desc["in_dim"], desc["out_dim"])
    if kind == "conv2d":
        return Conv2d(desc["in_channels"], desc["out_channels"], desc["kernel"])
    if kind == "avgpool2x2":
        return AvgPool2x2()
    if kind == "flatten":
        return Flatten()
    if kind == "activation":
        return Activation(desc["name"])
    if kind == "rnn-cell":
        return RnnCell(desc["in_dim"], desc["hidden"])
    if kind == "normalizer":
        return Normalizer(desc["scheme"], desc["d"], desc["epsilon"], desc["momentum"])
    raise ValueError(f"unknown layer kind {kind!r}")


class Network:
    """Ordered layer stack; normalizers must sit right after a nonlinearity."""

    def __init__(self, layers):
        for i, layer in enumerate(layers):
            if isinstance(layer, Normalizer):
                prev = layers[i - 1] if i > 0 else None
                if not isinstance(prev, (Activation, RnnCell)):
                    raise ValueError(
                        f"normalizer at position {i} must directly follow a nonlinearity"
                    )
        self.layers = list(layers)

    def forward(self, x, train=True, flags=None, update_stats=True):
        caches = []
        out = x
        for layer in self.layers:
            out, cache = layer.forward(out, train=train, flags=flags, update_stats=update_stats)
            caches.append(cache)
        return out, caches

    def backward(self, caches, dout):
        grads = {}
        grad = dout
        for i in range(len(self.layers) - 1, -1, -1):
            grad, layer_grads = self.layers[i].backward(caches[i], grad)
            for name, g in layer_grads.items():
                grads[f"{i}.{name}"] = g
        return grads

    def loss(self, x, labels, train=True, flags=None, update_stats=True):
        logits, caches = self.forward(x, train=train, flags=flags, update_stats=update_stats)
        value, dlogits = cross_entropy(logits, labels)
        acc = accuracy(logits, labels)
        return value, acc, caches, dlogits

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.params().items():
                out[f"{i}.{name}"] = p
        return out

    def set_param(self, key, value):
        idx, name = key.split(".", 1)
        self.layers[int(idx)].set_param(name, value)

    def apply_params(self, params):
        for key, value in params.items():
            self.set_param(key, value)

    def normalizers(self):
        return [layer for layer in self.layers if isinstance(layer, Normalizer)]

    def checksum(self):
        """Order-sensitive hash of every parameter and running-stat buffer."""
        acc = []
        for i, layer in enumerate(self.layers):
            for name, p in sorted(layer.params().items()):
                acc.append((f"{i}.{name}", tuple(p.data)))
            if isinstance(layer, Normalizer):
                r = layer.running
                acc.append((
                    f"{i}.running",
                    (tuple(r.e_mu_b.data), tuple(r.e_sigma_b.data),
                     r.e_mu_f, r.e_sigma_f, r.count, r.batch_m),
                ))
        return hash(tuple(acc))


def softmax(x):
    """Rowwise softmax of a rank-2 tensor."""
    m, c = x.shape
    out = [0.0] * (m * c)
    xd = x.data
    for i in range(m):
        base = i * c
        row = xd[base:base + c]
        mx = max(row)
        exps = [math.exp(v - mx) for v in row]
        z = sum(exps)
        for k in range(c):
            out[base + k] = exps[k] / z
    return Tensor._wrap((m, c), out)


def softmax_backward(y, dy):
    """Input gradient of rowwise softmax given its output y."""
    m, c = y.shape
    out = [0.0] * (m * c)
    yd, dyd = y.data, dy.data
    for i in range(m):
        base = i * c
        dot = 0.0
        for k in range(c):
            dot += dyd[base + k] * yd[base + k]
        for k in range(c):
            out[base + k] = yd[base + k] * (dyd[base + k] - dot)
    return Tensor._wrap((m, c), out)


def cross_entropy(logits, labels):
    """Mean negative log softmax probability and its logits gradient.

    Computed in log-sum-exp form so the loss stays finite even when the
    softmax of an extreme logit row underflows.
    """
    m, c = logits.shape
    if len(labels) != m:
        raise ValueError(f"{len(labels)} labels for batch of {m}")
    ld = logits.data
    total = 0.0
    dlogits = [0.0] * (m * c)
    inv_m = 1.0 / m
    for i, label in enumerate(labels):
        if not 0 <= label < c:
            raise ValueError(f"label {label} out of range for {c} classes")
        base = i * c
        row = ld[base:base + c]
        mx = max(row)
        exps = [math.exp(v - mx) for v in row]
        z = sum(exps)
        total -= (row[label] - mx) - math.log(z)
        for k in range(c):
            dlogits[base + k] = exps[k] / z * inv_m
        dlogits[base + label] -= inv_m
    return total * inv_m, Tensor._wrap((m, c), dlogits)


def accuracy(logits, labels):
    """Fraction of rows whose argmax matches the label."""
    m, c = logits.shape
    hits = 0
    ld = logits.data
    for i, label in enumerate(labels):
        row = ld[i * c:(i + 1) * c]
        if row.index(max(row)) == label:
            hits += 1
    return hits / m


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """One update; returns fresh parameter tensors, never mutates."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        lr, eps = self.learning_rate, self.epsilon
        out = {}
        for key, p in params.items():
            g = grads[key]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {key}")
            mom = self.m.get(key)
            vel = self.v.get(key)
            if mom is None:
                mom = [0.0] * p.size
                vel = [0.0] * p.size
            gd = g.data
            mom = [b1 * a + (1.0 - b1) * b for a, b in zip(mom, gd)]
            vel = [b2 * a + (1.0 - b2) * b * b for a, b in zip(vel, gd)]
            self.m[key] = mom
            self.v[key] = vel
            new = [
                w - lr * (a / bc1) / (math.sqrt(b / bc2) + eps)
                for w, a, b in zip(p.data, mom, vel)
            ]
            out[key] = Tensor._wrap(p.shape, new)
        return out


def network_train_epoch(net, dataset, batch_size, optimizer, rng):
    """One pass over the dataset in a seeded shuffle order.

    Returns one (loss, accuracy, batch size) record per step; metrics are
    measured on each batch before its update.
    """
    n = len(dataset)
    order = rng.permutation(n)
    records = []
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        xb = take(dataset.inputs, idx)
        yb = [dataset.labels[i] for i in idx]
        value, acc, caches, dlogits = net.loss(xb, yb, train=True)
        grads = net.backward(caches, dlogits)
        net.apply_params(optimizer.step(net.params(), grads))
        records.append((value, acc, len(idx)))
    return records


def network_evaluate(net, dataset, flags=None):
    """Loss and accuracy over the whole dataset as one inference batch."""
    logits, _ = net.forward(dataset.inputs, train=False, flags=flags)
    value, _ = cross_entropy(logits, dataset.labels)
    return value, accuracy(logits, dataset.labels)


def build_cnn(in_channels, height, width, num_classes, normalizer, rng,
              epsilon=1e-4, momentum=0.9, filters=8, kernel=3, dense_width=32):
    """Small post-nonlinearity-normalized CNN: conv, pool, two dense layers."""
    conv_h, conv_w = height - kernel + 1, width - kernel + 1
    if conv_h % 2 or conv_w % 2:
        raise ValueError("conv output must have even spatial dims for 2x2 pooling")
    layers = [Conv2d(in_channels, filters, kernel, rng), Activation("relu")]
    if normalizer != "none":
        layers.append(Normalizer(normalizer, filters * conv_h * conv_w, epsilon, momentum))
    layers += [
        AvgPool2x2(),
        Flatten(),
        Dense(filters * (conv_h // 2) * (conv_w // 2), dense_width, rng),
        Activation("relu"),
    ]
    if normalizer != "none":
        layers.append(Normalizer(normalizer, dense_width, epsilon, momentum))
    layers.append(Dense(dense_width, num_classes, rng))
    return Network(layers)


def build_rnn(vocab, hidden, num_classes, normalizer, rng, epsilon=1e-4, momentum=0.9):
    """Recurrent classifier normalizing the final hidden state."""
    layers = [RnnCell(vocab, hidden, rng)]
    if normalizer != "none":
        layers.append(Normalizer(normalizer, hidden, epsilon, momentum))
    layers.append(Dense(hidden, num_classes, rng))
    return Network(layers)


def build_dense_net(in_dim, hidden, num_classes, normalizer, rng,
                    epsilon=1e-4, momentum=0.9, activation="tanh"):
    """Two-layer dense classifier used for gradient verification."""
    layers = [Dense(in_dim, hidden, rng), Activation(activation)]
    if normalizer != "none":
        layers.append(Normalizer(normalizer, hidden, epsilon, momentum))
    layers.append(Dense(hidden, num_classes, rng))
    return Network(layers)


def _broadcast_row(vec, m):
    d = vec.shape[0]
    return Tensor._wrap((m, d), vec.data * m)


def _col_sum(x):
    m, d = x.shape
    out = [0.0] * d
    xd = x.data
    for i in range(m):
        base = i * d
        for k in range(d):
            out[k] += xd[base + k]
    return Tensor._wrap((d,), out)
