"""Fully-connected tanh ResNet with analytic input-derivative propagation.

The forward pass carries, alongside the plain value, a configurable set of
derivative channels per input coordinate: first derivatives, diagonal second
derivatives, and mixed space-time second derivatives.  Each channel is
propagated exactly through every layer (tanh' = 1 - tanh^2,
tanh'' = -2 tanh tanh'), so the returned derivatives are the analytic
derivatives of the network function, not numerical approximations.

Parameter gradients of any scalar built from those outputs are obtained by
reverse accumulation through the same extended computation.  Everything is
float64 and deterministic for fixed inputs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

try:  # fused layer kernels; the numpy path below is the reference
    if os.environ.get("ACPINN_NO_NUMBA"):
        raise ImportError
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

CHECKPOINT_MAGIC = b"ACPINN1\n"

HIDDEN_ACTIVATIONS = ("tanh",)
OUTPUT_ACTIVATIONS = ("linear", "tanh")


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class TrainingFault(RuntimeError):
    """Non-finite loss or gradient encountered during training."""


class CheckpointFormatError(RuntimeError):
    """Checkpoint file is corrupt, truncated, or of an unknown version."""


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description.

    ``depth`` counts hidden layers; the single skip connection adds the first
    hidden layer's output to the last hidden layer's pre-activation (present
    only when depth >= 2, where source and target are distinct).
    """

    depth: int
    width: int
    input_dim: int
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ContractViolation("depth and width must be >= 1")
        if self.input_dim not in (2, 3, 4):
            raise ContractViolation("input_dim must be spatial dim + 1, in {2,3,4}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ContractViolation(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ContractViolation(f"unsupported output activation {self.output_activation!r}")

    @property
    def spatial_dim(self) -> int:
        return self.input_dim - 1

    @property
    def time_coord(self) -> int:
        return self.input_dim - 1

    @property
    def has_skip(self) -> bool:
        return self.depth >= 2

    def layer_shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        """(weight shape, bias shape) per layer, input to output order."""
        shapes = [((self.width, self.input_dim), (self.width,))]
        shapes += [((self.width, self.width), (self.width,))] * (self.depth - 1)
        shapes.append(((1, self.width), (1,)))
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(w)) + b[0] for w, b in self.layer_shapes())

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "width": self.width,
            "input_dim": self.input_dim,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }


class ParamSlot(NamedTuple):
    name: str
    shape: tuple[int, ...]
    offset: int


def parameter_layout(spec: NetworkSpec) -> tuple[ParamSlot, ...]:
    slots = []
    offset = 0
    for ell, (w_shape, b_shape) in enumerate(spec.layer_shapes()):
        slots.append(ParamSlot(f"W{ell}", w_shape, offset))
        offset += int(np.prod(w_shape))
        slots.append(ParamSlot(f"b{ell}", b_shape, offset))
        offset += b_shape[0]
    return tuple(slots)


@dataclass
class ParameterVector:
    """Flat float64 trainable parameters plus their layout map."""

    values: np.ndarray
    layout: tuple[ParamSlot, ...]

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = self.layout[-1].offset + int(np.prod(self.layout[-1].shape))
        if self.values.ndim != 1 or self.values.size != expected:
            raise ContractViolation(
                f"parameter vector length {self.values.size} != layout total {expected}"
            )

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.layout)

    def view(self, name: str) -> np.ndarray:
        for slot in self.layout:
            if slot.name == name:
                n = int(np.prod(slot.shape))
                return self.values[slot.offset : slot.offset + n].reshape(slot.shape)
        raise KeyError(name)


def _layer_views(spec: NetworkSpec, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    views = []
    offset = 0
    for w_shape, b_shape in spec.layer_shapes():
        nw = w_shape[0] * w_shape[1]
        W = theta[offset : offset + nw].reshape(w_shape)
        offset += nw
        b = theta[offset : offset + b_shape[0]]
        offset += b_shape[0]
        views.append((W, b))
    return views


def init_params(spec: NetworkSpec, seed: int) -> ParameterVector:
    """Xavier (Glorot) normal weights, zero biases, from one seeded stream."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.param_count())
    offset = 0
    for w_shape, b_shape in spec.layer_shapes():
        fan_out, fan_in = w_shape
        std = np.sqrt(2.0 / (fan_in + fan_out))
        nw = fan_out * fan_in
        theta[offset : offset + nw] = rng.normal(0.0, std, size=nw)
        offset += nw + b_shape[0]  # biases stay zero
    return ParameterVector(theta, parameter_layout(spec))


# ---------------------------------------------------------------------------
# Derivative channels


@dataclass(frozen=True)
class ChannelSet:
    """Which derivative channels accompany the value through the network.

    ``first``: input coordinates with a first-derivative channel.
    ``second``: coordinates with a diagonal second-derivative channel.
    ``mixed_time``: spatial coordinates i carrying a d^2/(dx_i dt) channel.
    Second and mixed channels require the corresponding first channels.
    """

    input_dim: int
    first: tuple[int, ...] = ()
    second: tuple[int, ...] = ()
    mixed_time: tuple[int, ...] = ()

    def __post_init__(self):
        t = self.input_dim - 1
        for c in self.first + self.second + self.mixed_time:
            if not 0 <= c < self.input_dim:
                raise ContractViolation(f"coordinate {c} outside input_dim {self.input_dim}")
        if not set(self.second) <= set(self.first):
            raise ContractViolation("second-derivative channels require first channels")
        if self.mixed_time:
            if t not in self.first or not set(self.mixed_time) <= set(self.first):
                raise ContractViolation("mixed channels require time and spatial first channels")
            if t in self.mixed_time:
                raise ContractViolation("mixed channels are spatial-time only")

    @property
    def n_channels(self) -> int:
        return 1 + len(self.first) + len(self.second) + len(self.mixed_time)

    def idx_first(self, coord: int) -> int:
        return 1 + self.first.index(coord)

    def idx_second(self, coord: int) -> int:
        return 1 + len(self.first) + self.second.index(coord)

    def idx_mixed(self, coord: int) -> int:
        return 1 + len(self.first) + len(self.second) + self.mixed_time.index(coord)


def channels_value(input_dim: int) -> ChannelSet:
    return ChannelSet(input_dim)


def channels_jet(input_dim: int) -> ChannelSet:
    """Value, all first derivatives, diagonal spatial second derivatives."""
    d = input_dim - 1
    return ChannelSet(input_dim, first=tuple(range(input_dim)), second=tuple(range(d)))


def channels_boundary(input_dim: int) -> ChannelSet:
    d = input_dim - 1
    return ChannelSet(input_dim, first=tuple(range(d)))


def channels_energy(input_dim: int) -> ChannelSet:
    """Value, spatial + time firsts, spatial-time mixed (for dE/dt)."""
    d = input_dim - 1
    return ChannelSet(
        input_dim, first=tuple(range(input_dim)), mixed_time=tuple(range(d))
    )


def channels_energy_value(input_dim: int) -> ChannelSet:
    d = input_dim - 1
    return ChannelSet(input_dim, first=tuple(range(d)))


@dataclass
class JetBatch:
    """Network outputs and input derivatives at a batch of points.

    Arrays are ordered per the ChannelSet tuples: ``first[:, k]`` is the
    derivative along ``channels.first[k]``, and so on.
    """

    channels: ChannelSet
    u: np.ndarray
    first: np.ndarray
    second: np.ndarray
    mixed_time: np.ndarray

    @classmethod
    def zeros(cls, channels: ChannelSet, n: int) -> "JetBatch":
        return cls(
            channels,
            np.zeros(n),
            np.zeros((n, len(channels.first))),
            np.zeros((n, len(channels.second))),
            np.zeros((n, len(channels.mixed_time))),
        )

    def d1(self, coord: int) -> np.ndarray:
        return self.first[:, self.channels.first.index(coord)]

    def d2(self, coord: int) -> np.ndarray:
        return self.second[:, self.channels.second.index(coord)]

    def dmt(self, coord: int) -> np.ndarray:
        return self.mixed_time[:, self.channels.mixed_time.index(coord)]

    @property
    def du_dt(self) -> np.ndarray:
        return self.d1(self.channels.input_dim - 1)

    @property
    def spatial_grad(self) -> np.ndarray:
        d = self.channels.input_dim - 1
        cols = [self.channels.first.index(i) for i in range(d)]
        return self.first[:, cols]

    @property
    def laplacian(self) -> np.ndarray:
        return self.second.sum(axis=1)


@dataclass(frozen=True)
class Jet:
    """Single-point jet: value, spatial gradient, diagonal spatial second
    derivatives, and time derivative."""

    u: float
    du_dx: np.ndarray
    d2u_dx2: np.ndarray
    du_dt: float


# ---------------------------------------------------------------------------
# Forward propagation

# Tape entries per hidden layer: (layer input Z, (A, s, s1, s2)) where A is the
# pre-activation channel stack and s, s1, s2 are tanh and its derivatives.


def _affine(Z: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    C, B, nin = Z.shape
    out = np.empty((C, B, W.shape[0]))
    np.matmul(Z.reshape(C * B, nin), W.T, out=out.reshape(C * B, W.shape[0]))
    out[0] += b
    return out


@lru_cache(maxsize=None)
def _channel_meta(cs: ChannelSet):
    """(n1, second-source, mixed-source, time-channel) index arrays for the
    fused kernels."""
    n1 = len(cs.first)
    sec_src = np.array([cs.idx_first(c) for c in cs.second], dtype=np.int64)
    mix_src = np.array([cs.idx_first(c) for c in cs.mixed_time], dtype=np.int64)
    kt = cs.idx_first(cs.input_dim - 1) if cs.mixed_time else 0
    return n1, sec_src, mix_src, kt


@_njit(cache=True)
def _nb_tanh_fwd(A, Z, S, S1, S2, n1, sec_src, mix_src, kt, need2):
    C, B, W = A.shape
    n2 = sec_src.shape[0]
    nm = mix_src.shape[0]
    for b in range(B):
        for w in range(W):
            s = math.tanh(A[0, b, w])
            S[b, w] = s
            S1[b, w] = 1.0 - s * s
            Z[0, b, w] = s
        for k in range(n1):
            for w in range(W):
                Z[1 + k, b, w] = S1[b, w] * A[1 + k, b, w]
        if need2:
            for w in range(W):
                S2[b, w] = -2.0 * S[b, w] * S1[b, w]
            for j in range(n2):
                kg = sec_src[j]
                kh = 1 + n1 + j
                for w in range(W):
                    Z[kh, b, w] = (S2[b, w] * A[kg, b, w] * A[kg, b, w]
                                   + S1[b, w] * A[kh, b, w])
            for j in range(nm):
                kg = mix_src[j]
                km = 1 + n1 + n2 + j
                for w in range(W):
                    Z[km, b, w] = (S2[b, w] * A[kg, b, w] * A[kt, b, w]
                                   + S1[b, w] * A[km, b, w])


@_njit(cache=True)
def _nb_tanh_adj(Abar, A, S, S1, S2, out, n1, sec_src, mix_src, kt, need2):
    C, B, W = Abar.shape
    n2 = sec_src.shape[0]
    nm = mix_src.shape[0]
    for b in range(B):
        for w in range(W):
            out[0, b, w] = Abar[0, b, w] * S1[b, w]
        for k in range(n1):
            for w in range(W):
                s2 = -2.0 * S[b, w] * S1[b, w]
                out[0, b, w] += Abar[1 + k, b, w] * s2 * A[1 + k, b, w]
                out[1 + k, b, w] = Abar[1 + k, b, w] * S1[b, w]
        if need2:
            for j in range(n2):
                kg = sec_src[j]
                kh = 1 + n1 + j
                for w in range(W):
                    s1 = S1[b, w]
                    s2 = S2[b, w]
                    s3 = -2.0 * (s1 * s1 + S[b, w] * s2)
                    ag = A[kg, b, w]
                    out[0, b, w] += Abar[kh, b, w] * (s3 * ag * ag + s2 * A[kh, b, w])
                    out[kg, b, w] += Abar[kh, b, w] * 2.0 * s2 * ag
                    out[kh, b, w] = Abar[kh, b, w] * s1
            for j in range(nm):
                kg = mix_src[j]
                km = 1 + n1 + n2 + j
                for w in range(W):
                    s1 = S1[b, w]
                    s2 = S2[b, w]
                    s3 = -2.0 * (s1 * s1 + S[b, w] * s2)
                    ag = A[kg, b, w]
                    at = A[kt, b, w]
                    out[0, b, w] += Abar[km, b, w] * (s3 * ag * at + s2 * A[km, b, w])
                    out[kg, b, w] += Abar[km, b, w] * s2 * at
                    out[kt, b, w] += Abar[km, b, w] * s2 * ag
                    out[km, b, w] = Abar[km, b, w] * s1


_DUMMY = np.zeros((1, 1))


def _tanh_forward(A: np.ndarray, cs: ChannelSet):
    need2 = bool(cs.second or cs.mixed_time)
    if HAVE_NUMBA:
        n1, sec_src, mix_src, kt = _channel_meta(cs)
        C, B, W = A.shape
        Z = np.empty_like(A)
        s = np.empty((B, W))
        s1 = np.empty((B, W))
        s2 = np.empty((B, W)) if need2 else _DUMMY
        _nb_tanh_fwd(A, Z, s, s1, s2, n1, sec_src, mix_src, kt, need2)
        return Z, (A, s, s1, s2 if need2 else None)
    s = np.tanh(A[0])
    s1 = 1.0 - s * s
    s2 = -2.0 * s * s1 if need2 else None
    Z = np.empty_like(A)
    Z[0] = s
    for k in range(len(cs.first)):
        np.multiply(s1, A[1 + k], out=Z[1 + k])
    for coord in cs.second:
        kg, kh = cs.idx_first(coord), cs.idx_second(coord)
        Z[kh] = s2 * np.square(A[kg]) + s1 * A[kh]
    if cs.mixed_time:
        At = A[cs.idx_first(cs.input_dim - 1)]
        for coord in cs.mixed_time:
            kg, km = cs.idx_first(coord), cs.idx_mixed(coord)
            Z[km] = s2 * A[kg] * At + s1 * A[km]
    return Z, (A, s, s1, s2)


def forward_jets(
    params: ParameterVector | np.ndarray,
    spec: NetworkSpec,
    X: np.ndarray,
    channels: ChannelSet | None = None,
    with_tape: bool = False,
):
    """Evaluate the network and requested derivative channels at rows of X.

    X has shape (n, input_dim) with time as the last column.  Returns a
    JetBatch, plus the reverse-mode tape when ``with_tape`` is set.
    """
    theta = params.values if isinstance(params, ParameterVector) else params
    if channels is None:
        channels = channels_jet(spec.input_dim)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ContractViolation(
            f"points have shape {X.shape}, expected (n, {spec.input_dim})"
        )
    views = _layer_views(spec, theta)
    cs = channels
    C, B = cs.n_channels, X.shape[0]
    Z = np.zeros((C, B, spec.input_dim))
    Z[0] = X
    for pos, coord in enumerate(cs.first):
        Z[1 + pos, :, coord] = 1.0

    tape_layers = []
    skip_src = None
    for ell in range(spec.depth):
        W, b = views[ell]
        A = _affine(Z, W, b)
        if ell == spec.depth - 1 and spec.has_skip:
            A += skip_src
        Z_new, saved = _tanh_forward(A, cs)
        if with_tape:
            tape_layers.append((Z, saved))
        if ell == 0 and spec.has_skip:
            skip_src = Z_new
        Z = Z_new

    W_out, b_out = views[spec.depth]
    A = _affine(Z, W_out, b_out)
    out_saved = None
    if spec.output_activation == "tanh":
        A, out_saved = _tanh_forward(A, cs)

    jets = JetBatch(
        cs,
        A[0, :, 0].copy(),
        A[1 : 1 + len(cs.first), :, 0].T.copy(),
        A[1 + len(cs.first) : 1 + len(cs.first) + len(cs.second), :, 0].T.copy(),
        A[1 + len(cs.first) + len(cs.second) :, :, 0].T.copy(),
    )
    if not with_tape:
        return jets
    tape = _Tape(spec, cs, theta, tape_layers, Z, out_saved)
    return jets, tape


@dataclass
class _Tape:
    spec: NetworkSpec
    channels: ChannelSet
    theta: np.ndarray
    layers: list
    final_hidden: np.ndarray
    out_saved: object


def backprop(tape: _Tape, adjoint: JetBatch) -> np.ndarray:
    """Gradient of sum(adjoint . outputs) with respect to the parameters."""
    spec, cs = tape.spec, tape.channels
    views = _layer_views(spec, tape.theta)
    grad = np.zeros(spec.param_count())
    gviews = _layer_views(spec, grad)

    C = cs.n_channels
    B = adjoint.u.shape[0]
    Abar = np.zeros((C, B, 1))
    Abar[0, :, 0] = adjoint.u
    n1, n2 = len(cs.first), len(cs.second)
    if n1:
        Abar[1 : 1 + n1, :, 0] = adjoint.first.T
    if n2:
        Abar[1 + n1 : 1 + n1 + n2, :, 0] = adjoint.second.T
    if len(cs.mixed_time):
        Abar[1 + n1 + n2 :, :, 0] = adjoint.mixed_time.T

    if spec.output_activation == "tanh":
        Abar = _tanh_adjoint(Abar, tape.out_saved, cs)
    Abar = _affine_backward(Abar, tape.final_hidden, views[spec.depth], gviews[spec.depth])

    skip_adj = None
    for ell in reversed(range(spec.depth)):
        Z_in, saved = tape.layers[ell]
        if ell == 0 and skip_adj is not None:
            Abar = Abar + skip_adj
        A_pre = _tanh_adjoint(Abar, saved, cs)
        if ell == spec.depth - 1 and spec.has_skip:
            skip_adj = A_pre
        Abar = _affine_backward(A_pre, Z_in, views[ell], gviews[ell])
    return grad


def _affine_backward(Abar, Z_in, view, gview):
    W, _ = view
    gW, gb = gview
    C, B, nout = Abar.shape
    A2 = Abar.reshape(C * B, nout)
    Z2 = Z_in.reshape(C * B, Z_in.shape[2])
    gW += A2.T @ Z2
    gb += Abar[0].sum(axis=0)
    return (A2 @ W).reshape(C, B, W.shape[1])


def _tanh_adjoint(Abar, saved, cs: ChannelSet):
    A, s, s1, s2 = saved
    if HAVE_NUMBA:
        n1, sec_src, mix_src, kt = _channel_meta(cs)
        need2 = bool(cs.second or cs.mixed_time)
        out = np.empty_like(Abar)
        _nb_tanh_adj(Abar, A, s, s1, s2 if need2 else _DUMMY, out,
                     n1, sec_src, mix_src, kt, need2)
        return out
    out = np.empty_like(Abar)
    t = cs.input_dim - 1

    acc = Abar[0] * s1
    if cs.first:
        if s2 is None:
            s2 = -2.0 * s * s1
        for k in range(len(cs.first)):
            acc += Abar[1 + k] * s2 * A[1 + k]
    s3 = -2.0 * (s1 * s1 + s * s2) if (cs.second or cs.mixed_time) else None
    for coord in cs.second:
        kg, kh = cs.idx_first(coord), cs.idx_second(coord)
        acc += Abar[kh] * (s3 * np.square(A[kg]) + s2 * A[kh])
    if cs.mixed_time:
        kt = cs.idx_first(t)
        At = A[kt]
        for coord in cs.mixed_time:
            kg, km = cs.idx_first(coord), cs.idx_mixed(coord)
            acc += Abar[km] * (s3 * A[kg] * At + s2 * A[km])
    out[0] = acc

    for k in range(len(cs.first)):
        np.multiply(Abar[1 + k], s1, out=out[1 + k])
    for coord in cs.second:
        kg, kh = cs.idx_first(coord), cs.idx_second(coord)
        out[kg] += Abar[kh] * 2.0 * s2 * A[kg]
        np.multiply(Abar[kh], s1, out=out[kh])
    if cs.mixed_time:
        kt = cs.idx_first(t)
        At = A[kt]
        for coord in cs.mixed_time:
            kg, km = cs.idx_first(coord), cs.idx_mixed(coord)
            out[kg] += Abar[km] * s2 * At
            out[kt] += Abar[km] * s2 * A[kg]
            np.multiply(Abar[km], s1, out=out[km])
    return out


# ---------------------------------------------------------------------------
# Convenience operations


def network_values(params, spec: NetworkSpec, X: np.ndarray) -> np.ndarray:
    """Plain forward values (no derivative channels)."""
    return forward_jets(params, spec, X, channels_value(spec.input_dim)).u


def forward_jet(params, spec: NetworkSpec, x: Sequence[float], t: float) -> Jet:
    """Jet of the network at a single space-time point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (spec.spatial_dim,):
        raise ContractViolation(
            f"spatial point has shape {x.shape}, expected ({spec.spatial_dim},)"
        )
    X = np.concatenate([x, [t]])[None, :]
    jb = forward_jets(params, spec, X, channels_jet(spec.input_dim))
    return Jet(
        u=float(jb.u[0]),
        du_dx=jb.spatial_grad[0].copy(),
        d2u_dx2=jb.second[0].copy(),
        du_dt=float(jb.du_dt[0]),
    )


def loss_gradient(
    params,
    spec: NetworkSpec,
    X: np.ndarray,
    batch_loss: Callable[[JetBatch], tuple[float, JetBatch]],
    channels: ChannelSet | None = None,
) -> tuple[float, np.ndarray]:
    """Value and parameter gradient of a scalar loss of the jets at X.

    ``batch_loss`` maps the JetBatch to (value, adjoint), the adjoint holding
    the loss derivatives with respect to each jet entry.
    """
    jets, tape = forward_jets(params, spec, X, channels, with_tape=True)
    value, adjoint = batch_loss(jets)
    if not np.isfinite(value):
        raise TrainingFault(f"non-finite loss value {value!r}")
    grad = backprop(tape, adjoint)
    if not np.all(np.isfinite(grad)):
        raise TrainingFault("non-finite entries in parameter gradient")
    return float(value), grad


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, spec: NetworkSpec, params: ParameterVector) -> None:
    header = json.dumps(spec.to_dict()).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(header + b"\n")
        fh.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[NetworkSpec, ParameterVector]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r} in {path}")
        header = fh.readline()
        try:
            spec = NetworkSpec(**json.loads(header.decode()))
        except (json.JSONDecodeError, TypeError, UnicodeDecodeError) as exc:
            raise CheckpointFormatError(f"unreadable header in {path}: {exc}") from exc
        raw = fh.read()
    expected = spec.param_count() * 8
    if len(raw) != expected:
        raise CheckpointFormatError(
            f"truncated checkpoint {path}: {len(raw)} bytes, expected {expected}"
        )
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return spec, ParameterVector(values, parameter_layout(spec))
