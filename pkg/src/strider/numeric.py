"""Dense 2-D tensor numerics with reverse-mode automatic differentiation.

Everything the network needs lives here: a float64 matrix type, a gradient
tape, and the primitive operations (projections, activations, softmax, layer
norm, dropout, fused multi-head attention, reductions). Samples are batched
along the row axis; ops that must not mix samples (attention, token stacking,
token pooling) take an explicit ``batch`` argument.

Ops record themselves on the innermost active :class:`Tape`. With no tape
active they are plain numpy computations, which is the inference path.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError

# Finite-value validation of op outputs. Tests keep it on; long training
# runs may disable it and rely on the per-step loss finiteness check.
FINITE_CHECKS = True

LN_EPS = 1e-8

_TAPES: list["Tape"] = []


def _checked(arr: np.ndarray, op: str) -> np.ndarray:
    if FINITE_CHECKS and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    return arr


class Tensor2:
    """A rows x cols float64 matrix, row-major, optionally tracked for grads."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ContractError(f"Tensor2 needs 2-D data, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor {self.shape}")
        return float(self.data[0, 0])

    def copy(self) -> "Tensor2":
        return Tensor2(self.data.copy(), self.requires_grad, self.name)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"<Tensor2{tag} {self.rows}x{self.cols}>"


def param(data, name: str = "") -> Tensor2:
    return Tensor2(data, requires_grad=True, name=name)


def constant(data) -> Tensor2:
    return Tensor2(data, requires_grad=False)


class Tape:
    """Ordered record of primitive ops for one forward/backward pass.

    Ops append themselves in execution order, which is already a valid
    topological order, so the backward sweep is a single reversed walk that
    visits each recorded op exactly once.
    """

    def __init__(self):
        self._entries: list[tuple[Tensor2, tuple[Tensor2, ...], callable]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPES.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, out: Tensor2, inputs: tuple[Tensor2, ...], backward) -> None:
        self._entries.append((out, inputs, backward))

    def gradients(self, loss: Tensor2, params: list[Tensor2]) -> list[np.ndarray]:
        """Accumulate d(loss)/d(p) for every p in ``params``.

        Parameters the loss never touched get exactly-zero gradients.
        """
        if loss.data.size != 1:
            raise ContractError("backward pass needs a scalar loss")
        touched: list[Tensor2] = [loss]
        loss.grad = np.ones_like(loss.data)
        for out, inputs, backward in reversed(self._entries):
            if out.grad is None:
                continue  # dead branch: output never contributed to the loss
            backward(out.grad)
            touched.append(out)
            touched.extend(inputs)
        result = [
            p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
            for p in params
        ]
        for t in touched:
            t.grad = None
        for p in params:
            p.grad = None
        return result


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def _make(out_data: np.ndarray, inputs: tuple[Tensor2, ...], backward, op: str) -> Tensor2:
    _checked(out_data, op)
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor2(out_data, requires_grad=track)
    if track:
        tape.record(out, inputs, backward)
    return out


def _acc(t: Tensor2, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)  # own the buffer
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.cols != b.rows:
        raise ContractError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _make(out_data, (a, b), backward, "matmul")


def add(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.shape != b.shape:
        raise ContractError(f"add shape mismatch: {a.shape} + {b.shape}")

    def backward(g):
        _acc(a, g)
        _acc(b, g)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.shape != b.shape:
        raise ContractError(f"sub shape mismatch: {a.shape} - {b.shape}")

    def backward(g):
        _acc(a, g)
        _acc(b, -g)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.shape != b.shape:
        raise ContractError(f"mul shape mismatch: {a.shape} * {b.shape}")

    def backward(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor2, c: float) -> Tensor2:
    def backward(g):
        _acc(a, g * c)

    return _make(a.data * c, (a,), backward, "scale")


def add_bias(x: Tensor2, bias: Tensor2) -> Tensor2:
    """x (m x n) plus a 1 x n bias row broadcast over every row."""
    if bias.rows != 1 or bias.cols != x.cols:
        raise ContractError(f"bias shape {bias.shape} does not broadcast over {x.shape}")

    def backward(g):
        _acc(x, g)
        _acc(bias, g.sum(axis=0, keepdims=True))

    return _make(x.data + bias.data, (x, bias), backward, "add_bias")


def add_tiled(x: Tensor2, block: Tensor2, batch: int) -> Tensor2:
    """x ((batch*k) x n) plus a k x n block repeated for each sample."""
    k = block.rows
    if x.rows != batch * k or x.cols != block.cols:
        raise ContractError(f"tiled add mismatch: {x.shape} vs {block.shape} x{batch}")
    out_data = x.data + np.tile(block.data, (batch, 1))

    def backward(g):
        _acc(x, g)
        _acc(block, g.reshape(batch, k, -1).sum(axis=0))

    return _make(out_data, (x, block), backward, "add_tiled")


def relu(x: Tensor2) -> Tensor2:
    mask = x.data > 0.0

    def backward(g):
        _acc(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), backward, "relu")


def _elu_arr(a: np.ndarray) -> np.ndarray:
    return np.where(a >= 0.0, a, np.expm1(np.minimum(a, 0.0)))


def elu(x):
    """Exponential linear unit: x for x >= 0, exp(x)-1 below. Accepts a
    plain float or a Tensor2."""
    if isinstance(x, (int, float)):
        xf = float(x)
        if not math.isfinite(xf):
            raise ContractError("elu needs finite input")
        return xf if xf >= 0.0 else math.expm1(xf)
    t: Tensor2 = x
    out_data = _elu_arr(t.data)
    deriv = np.where(t.data >= 0.0, 1.0, out_data + 1.0)

    def backward(g):
        _acc(t, g * deriv)

    return _make(out_data, (t,), backward, "elu")


def sigmoid(x: Tensor2) -> Tensor2:
    s = _sigmoid_arr(x.data)

    def backward(g):
        _acc(x, g * s * (1.0 - s))

    return _make(s, (x,), backward, "sigmoid")


def _sigmoid_arr(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def softmax_rows_arr(m: np.ndarray) -> np.ndarray:
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows(m: Tensor2) -> Tensor2:
    """Row-wise softmax with max-subtraction; each output row sums to 1."""
    p = softmax_rows_arr(m.data)

    def backward(g):
        inner = (g * p).sum(axis=1, keepdims=True)
        _acc(m, p * (g - inner))

    return _make(p, (m,), backward, "softmax_rows")


def layer_norm(x: Tensor2, gain: Tensor2, bias: Tensor2, eps: float = LN_EPS) -> Tensor2:
    """Per-row standardization followed by a 1 x n affine."""
    if gain.shape != (1, x.cols) or bias.shape != (1, x.cols):
        raise ContractError("layer_norm affine must be 1 x cols")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def backward(g):
        _acc(gain, (g * xhat).sum(axis=0, keepdims=True))
        _acc(bias, g.sum(axis=0, keepdims=True))
        gx = g * gain.data
        n = x.cols
        _acc(
            x,
            inv
            * (
                gx
                - gx.mean(axis=1, keepdims=True)
                - xhat * (gx * xhat).mean(axis=1, keepdims=True)
            ),
        )

    return _make(xhat * gain.data + bias.data, (x, gain, bias), backward, "layer_norm")


def dropout(x: Tensor2, rate: float, rng: np.random.Generator) -> Tensor2:
    """Inverted dropout: kept entries scaled by 1/(1-rate). rate=0 is the
    identity; inference code simply never calls this."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate out of range: {rate}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        _acc(x, g * keep)

    return _make(x.data * keep, (x,), backward, "dropout")


def multi_head_attention(
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    *,
    batch: int,
    heads: int,
    sink: list | None = None,
) -> Tensor2:
    """Scaled dot-product attention over per-sample token blocks.

    q is (batch*Lq) x width, k and v are (batch*Lk) x width; width must be
    divisible by ``heads``. Scores are scaled by 1/sqrt(width/heads) and
    softmaxed per row. When ``sink`` is given, the (batch, heads, Lq, Lk)
    probability array is appended to it.
    """
    width = q.cols
    if width != k.cols or width != v.cols or k.rows != v.rows:
        raise ContractError("attention q/k/v widths or key/value lengths disagree")
    if width % heads != 0:
        raise ContractError(f"width {width} not divisible by {heads} heads")
    if q.rows % batch or k.rows % batch:
        raise ContractError("token counts not divisible by batch")
    lq, lk, dh = q.rows // batch, k.rows // batch, width // heads

    def split(t: Tensor2, l: int) -> np.ndarray:  # -> (B, H, L, dh)
        return t.data.reshape(batch, l, heads, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q, lq), split(k, lk), split(v, lk)
    alpha = 1.0 / math.sqrt(dh)
    scores = np.einsum("bhqd,bhkd->bhqk", qh, kh) * alpha
    probs = softmax_rows_arr(scores)
    if sink is not None:
        sink.append(probs.copy())
    ctx = np.einsum("bhqk,bhkd->bhqd", probs, vh)
    out_data = ctx.transpose(0, 2, 1, 3).reshape(batch * lq, width)

    def backward(g):
        gh = g.reshape(batch, lq, heads, dh).transpose(0, 2, 1, 3)
        dprobs = np.einsum("bhqd,bhkd->bhqk", gh, vh)
        dv = np.einsum("bhqk,bhqd->bhkd", probs, gh)
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dq = np.einsum("bhqk,bhkd->bhqd", dscores, kh) * alpha
        dk = np.einsum("bhqk,bhqd->bhkd", dscores, qh) * alpha
        _acc(q, dq.transpose(0, 2, 1, 3).reshape(batch * lq, width))
        _acc(k, dk.transpose(0, 2, 1, 3).reshape(batch * lk, width))
        _acc(v, dv.transpose(0, 2, 1, 3).reshape(batch * lk, width))

    return _make(out_data, (q, k, v), backward, "attention")


def stack_tokens(parts: list[Tensor2], batch: int) -> Tensor2:
    """Concatenate per-sample token blocks along the token axis.

    Each part is (batch*K_i) x width; the output groups every sample's
    tokens contiguously, parts in the given order.
    """
    width = parts[0].cols
    ks = []
    blocks = []
    for p in parts:
        if p.cols != width or p.rows % batch:
            raise ContractError("stack_tokens parts disagree on width/batch")
        ks.append(p.rows // batch)
        blocks.append(p.data.reshape(batch, -1, width))
    out_data = np.concatenate(blocks, axis=1).reshape(batch * sum(ks), width)

    def backward(g):
        g3 = g.reshape(batch, sum(ks), width)
        off = 0
        for p, k in zip(parts, ks):
            _acc(p, g3[:, off : off + k, :].reshape(batch * k, width))
            off += k

    return _make(out_data, tuple(parts), backward, "stack_tokens")


def mean_token_pool(x: Tensor2, batch: int) -> Tensor2:
    """Per-sample mean over tokens: (batch*M) x n -> batch x n."""
    if x.rows % batch:
        raise ContractError("token count not divisible by batch")
    m = x.rows // batch
    out_data = x.data.reshape(batch, m, x.cols).mean(axis=1)

    def backward(g):
        _acc(x, np.repeat(g / m, m, axis=0))

    return _make(out_data, (x,), backward, "mean_token_pool")


def concat_cols(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.rows != b.rows:
        raise ContractError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    na = a.cols

    def backward(g):
        _acc(a, g[:, :na])
        _acc(b, g[:, na:])

    return _make(np.concatenate([a.data, b.data], axis=1), (a, b), backward, "concat_cols")


def col_slice(x: Tensor2, start: int, stop: int) -> Tensor2:
    if not 0 <= start < stop <= x.cols:
        raise ContractError(f"col_slice [{start}:{stop}] out of range for {x.shape}")

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        _acc(x, full)

    return _make(x.data[:, start:stop].copy(), (x,), backward, "col_slice")


def square(x: Tensor2) -> Tensor2:
    def backward(g):
        _acc(x, g * 2.0 * x.data)

    return _make(x.data ** 2, (x,), backward, "square")


def absval(x: Tensor2) -> Tensor2:
    s = np.sign(x.data)  # subgradient 0 at 0

    def backward(g):
        _acc(x, g * s)

    return _make(np.abs(x.data), (x,), backward, "absval")


def bce_with_logits(x: Tensor2, targets: np.ndarray) -> Tensor2:
    """Elementwise binary cross-entropy against constant 0/1 targets,
    computed stably as softplus(x) - x*t."""
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != x.shape:
        raise ContractError(f"bce target shape {t.shape} != {x.shape}")
    sp = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))

    def backward(g):
        _acc(x, g * (_sigmoid_arr(x.data) - t))

    return _make(sp - x.data * t, (x,), backward, "bce_with_logits")


def mean_all(x: Tensor2) -> Tensor2:
    n = x.data.size

    def backward(g):
        _acc(x, np.full_like(x.data, g[0, 0] / n))

    return _make(np.array([[x.data.mean()]]), (x,), backward, "mean_all")


def sum_all(x: Tensor2) -> Tensor2:
    def backward(g):
        _acc(x, np.full_like(x.data, g[0, 0]))

    return _make(np.array([[x.data.sum()]]), (x,), backward, "sum_all")
