"""Minimal dense tensor core: row-major float64 buffers and a seeded RNG.

Everything is pure Python on flat lists. Operations never mutate their
inputs; tensors are treated as immutable values once constructed.
"""

import math

MAX_RANK = 4

_MASK64 = (1 << 64) - 1


class Rng:
    """Deterministic splitmix64 stream with an explicit seed.

    There is no global state: every consumer receives an Rng (or derives a
    child stream), so identical seeds replay identical draw sequences.
    """

    __slots__ = ("_state", "_spare")

    def __init__(self, seed):
        self._state = int(seed) & _MASK64
        self._spare = None

    def next_u64(self):
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self):
        """Uniform draw in [0, 1) with 53 random mantissa bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def normal(self):
        """Standard normal draw (Box-Muller, second value cached)."""
        if self._spare is not None:
            value, self._spare = self._spare, None
            return value
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = radius * math.sin(theta)
        return radius * math.cos(theta)

    def randint(self, n):
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def permutation(self, n):
        """Fisher-Yates permutation of range(n) as a fresh list."""
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def child(self):
        """Derive an independent stream (advances this one by one draw)."""
        return Rng(self.next_u64())


class Tensor:
    """Dense n-dimensional array: shape tuple plus flat row-major buffer."""

    __slots__ = ("shape", "data")

    def __init__(self, shape, data):
        shape = tuple(int(s) for s in shape)
        if len(shape) == 0:
            raise ValueError("tensor shape must have at least one dimension")
        if len(shape) > MAX_RANK:
            raise ValueError(f"rank {len(shape)} exceeds supported maximum {MAX_RANK}")
        if any(s < 1 for s in shape):
            raise ValueError(f"dimension sizes must be >= 1, got {shape}")
        n = 1
        for s in shape:
            n *= s
        data = [float(v) for v in data]
        if n != len(data):
            raise ValueError(f"shape {shape} needs {n} elements, got {len(data)}")
        self.shape = shape
        self.data = data

    @classmethod
    def _wrap(cls, shape, data):
        # internal fast path: caller guarantees a fresh, well-formed buffer
        t = object.__new__(cls)
        t.shape = tuple(shape)
        t.data = data
        return t

    @property
    def size(self):
        return len(self.data)

    @property
    def rank(self):
        return len(self.shape)

    def at(self, *index):
        """Element lookup by multi-index (row-major)."""
        if len(index) != len(self.shape):
            raise ValueError(f"index {index} does not match rank {len(self.shape)}")
        flat = 0
        for i, (ix, dim) in enumerate(zip(index, self.shape)):
            if not 0 <= ix < dim:
                raise IndexError(f"index {ix} out of range for axis {i} (size {dim})")
            flat = flat * dim + ix
        return self.data[flat]

    def tolist(self):
        """Nested-list view of the buffer."""
        def build(shape, offset):
            if len(shape) == 1:
                return self.data[offset:offset + shape[0]]
            step = 1
            for s in shape[1:]:
                step *= s
            return [build(shape[1:], offset + i * step) for i in range(shape[0])]
        return build(self.shape, 0)

    def item(self):
        if len(self.data) != 1:
            raise ValueError("item() requires a single-element tensor")
        return self.data[0]

    def __repr__(self):
        return f"Tensor(shape={self.shape}, data={self.data!r})"

    def __eq__(self, other):
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and self.data == other.data
        )

    def __hash__(self):
        return hash((self.shape, tuple(self.data)))

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)


def _numel(shape):
    n = 1
    for s in shape:
        n *= int(s)
    return n


def zeros(shape):
    """Tensor of the given shape filled with 0.0."""
    return Tensor(shape, [0.0] * _numel(shape))


def ones(shape):
    """Tensor of the given shape filled with 1.0."""
    return Tensor(shape, [1.0] * _numel(shape))


def full(shape, value):
    """Tensor of the given shape filled with a constant."""
    return Tensor(shape, [float(value)] * _numel(shape))


def randn(shape, rng):
    """Tensor of seeded standard-normal draws."""
    return Tensor(shape, [rng.normal() for _ in range(_numel(shape))])


def matmul(a, b):
    """Matrix product of two rank-2 tensors."""
    if a.rank != 2 or b.rank != 2:
        raise ValueError(f"matmul needs rank-2 tensors, got {a.shape} and {b.shape}")
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    out = [0.0] * (m * n)
    for i in range(m):
        arow = ad[i * k:(i + 1) * k]
        base = i * n
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += arow[t] * bd[t * n + j]
            out[base + j] = acc
    return Tensor._wrap((m, n), out)


def transpose2d(x):
    """Transpose of a rank-2 tensor."""
    if x.rank != 2:
        raise ValueError(f"transpose2d needs a rank-2 tensor, got {x.shape}")
    m, n = x.shape
    xd = x.data
    out = [0.0] * (m * n)
    for i in range(m):
        base = i * n
        for j in range(n):
            out[j * m + i] = xd[base + j]
    return Tensor._wrap((n, m), out)


def reduce_mean(x, axis):
    """Mean along one axis; the axis is removed (rank-1 input yields shape (1,))."""
    if not 0 <= axis < x.rank:
        raise ValueError(f"axis {axis} out of range for rank {x.rank}")
    if x.rank == 1:
        return Tensor._wrap((1,), [sum(x.data) / len(x.data)])
    shape = x.shape
    outer = _numel(shape[:axis])
    count = shape[axis]
    inner = _numel(shape[axis + 1:])
    out = [0.0] * (outer * inner)
    xd = x.data
    for o in range(outer):
        for t in range(count):
            base = (o * count + t) * inner
            obase = o * inner
            for j in range(inner):
                out[obase + j] += xd[base + j]
    inv = 1.0 / count
    out = [v * inv for v in out]
    return Tensor._wrap(shape[:axis] + shape[axis + 1:], out)


def _binary(a, b, op):
    if isinstance(b, (int, float)):
        bb = float(b)
        return Tensor._wrap(a.shape, [op(v, bb) for v in a.data])
    if a.shape != b.shape:
        raise ValueError(f"elementwise op shape mismatch: {a.shape} vs {b.shape}")
    return Tensor._wrap(a.shape, [op(u, v) for u, v in zip(a.data, b.data)])


def add(a, b):
    """Elementwise sum; second operand may be a scalar."""
    return _binary(a, b, lambda u, v: u + v)


def sub(a, b):
    """Elementwise difference; second operand may be a scalar."""
    return _binary(a, b, lambda u, v: u - v)


def mul(a, b):
    """Elementwise product; second operand may be a scalar."""
    return _binary(a, b, lambda u, v: u * v)


def div(a, b):
    """Elementwise quotient; division by exact zero raises."""
    return _binary(a, b, lambda u, v: u / v)


def apply(x, f):
    """Elementwise map of a unary function."""
    return Tensor._wrap(x.shape, [f(v) for v in x.data])


def reshape(x, shape):
    """Same buffer under a new shape with identical element count."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or len(shape) > MAX_RANK or any(s < 1 for s in shape):
        raise ValueError(f"invalid target shape {shape}")
    if _numel(shape) != x.size:
        raise ValueError(f"cannot reshape {x.shape} ({x.size} elements) to {shape}")
    return Tensor._wrap(shape, list(x.data))


def take(x, indices):
    """Gather rows along axis 0 in the given order."""
    row = _numel(x.shape[1:]) if x.rank > 1 else 1
    xd = x.data
    out = []
    n = x.shape[0]
    for i in indices:
        if not 0 <= i < n:
            raise IndexError(f"row index {i} out of range for axis 0 (size {n})")
        out.extend(xd[i * row:(i + 1) * row])
    return Tensor._wrap((len(indices),) + x.shape[1:], out)
