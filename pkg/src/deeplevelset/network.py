"""Fully connected network used as a level set function.

The level set field is represented as phi(x, y) = N(x, y, theta) where N is a
small dense network with tanh hidden units and a single linear output.  All
derivatives needed by the optimizer (spatial gradient and the Jacobian with
respect to the parameters) are accumulated analytically, so the module has no
autodiff dependency and every quantity is a plain float64 ndarray.

Parameter layout is layer major: for each layer the weight matrix comes first
in row-major order, then the bias vector.  `param_count` gives the resulting
length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CheckpointError(RuntimeError):
    """Raised when a parameter checkpoint cannot be read or does not match."""


@dataclass(frozen=True)
class NetworkArchitecture:
    """Shape of the level set network.

    :param hidden_widths: neurons per hidden layer, at least one layer.
    :param input_dim: fixed at 2 (planar coordinates).
    :param output_dim: fixed at 1 (scalar level set value).
    """

    hidden_widths: tuple[int, ...]
    input_dim: int = 2
    output_dim: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if len(self.hidden_widths) < 1:
            raise ValueError("at least one hidden layer is required")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be positive, got {self.hidden_widths}")
        if self.input_dim != 2 or self.output_dim != 1:
            raise ValueError("this artifact supports exactly 2 inputs and 1 output")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """All layer widths from input to output."""
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    def __str__(self) -> str:
        return "[" + " ".join(str(w) for w in self.hidden_widths) + "]"


def param_count(arch: NetworkArchitecture) -> int:
    """Number of trainable parameters (weights plus biases over all layers)."""
    sizes = arch.layer_sizes
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


@dataclass
class ParameterVector:
    """Flat float64 parameter vector bound to its architecture."""

    values: np.ndarray
    arch: NetworkArchitecture

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("parameter vector must be one dimensional")
        expected = param_count(self.arch)
        if self.values.size != expected:
            raise ValueError(
                f"parameter vector has {self.values.size} entries, "
                f"architecture {self.arch} needs {expected}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector contains non-finite entries")

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.arch)


def init_random(arch: NetworkArchitecture, seed: int) -> ParameterVector:
    """Seeded uniform initialization, scale 1/sqrt(fan_in) per layer.

    Weights and biases of a layer share the layer's scale.  The draw order is
    fixed (layer by layer, weights then bias) so a given seed always produces
    the same vector.
    """
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    chunks = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        chunks.append(rng.uniform(-bound, bound, size=n_out * n_in))
        chunks.append(rng.uniform(-bound, bound, size=n_out))
    return ParameterVector(np.concatenate(chunks), arch)


def unpack(theta: ParameterVector) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the flat vector into per-layer (weight, bias) views.

    Weight matrices have shape (n_out, n_in); views share memory with theta.
    """
    sizes = theta.arch.layer_sizes
    layers = []
    offset = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = theta.values[offset : offset + n_out * n_in].reshape(n_out, n_in)
        offset += n_out * n_in
        b = theta.values[offset : offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


def pack(arch: NetworkArchitecture, layers: list[tuple[np.ndarray, np.ndarray]]) -> ParameterVector:
    """Inverse of `unpack`."""
    chunks = []
    for w, b in layers:
        chunks.append(np.asarray(w, dtype=np.float64).ravel())
        chunks.append(np.asarray(b, dtype=np.float64).ravel())
    return ParameterVector(np.concatenate(chunks), arch)


def scale_output(theta: ParameterVector, factor: float) -> ParameterVector:
    """Scale the network output by `factor` via the linear output layer.

    Multiplies the last layer's weights and bias, so N -> factor * N exactly
    and the zero level set is untouched.  Used to normalize the gradient
    magnitude near the contour after fitting a seed design.
    """
    if not np.isfinite(factor) or factor <= 0:
        raise ValueError(f"scale factor must be positive and finite, got {factor!r}")
    layers = [(w.copy(), b.copy()) for w, b in unpack(theta)]
    w_out, b_out = layers[-1]
    layers[-1] = (w_out * factor, b_out * factor)
    return pack(theta.arch, layers)


def _as_points(points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
    return pts


def _forward_pass(theta: ParameterVector, pts: np.ndarray):
    """Run the network, returning hidden activations and the output.

    Activations are kept for derivative accumulation; `acts[0]` is the input.
    """
    layers = unpack(theta)
    acts = [pts]
    a = pts
    for w, b in layers[:-1]:
        a = np.tanh(a @ w.T + b)
        acts.append(a)
    w_out, b_out = layers[-1]
    out = a @ w_out.T + b_out
    return layers, acts, out[:, 0]


def forward(theta: ParameterVector, points: np.ndarray) -> np.ndarray:
    """Evaluate the level set value at each point, shape (n,).

    Points are expected in the network's own input frame; callers that work in
    physical coordinates map them first (see `geometry.Grid`).
    """
    _, _, out = _forward_pass(theta, _as_points(points))
    return out


def grad_spatial(
    theta: ParameterVector, points: np.ndarray, scale: tuple[float, float] = (1.0, 1.0)
) -> np.ndarray:
    """Analytic gradient of the output with respect to the point coordinates.

    `scale` holds d(input frame)/d(physical frame) per axis; passing the
    grid's normalization scale therefore yields gradients in physical
    coordinates, while the default (1, 1) differentiates in the input frame.
    Returns shape (n, 2).
    """
    pts = _as_points(points)
    layers, acts, _ = _forward_pass(theta, pts)
    # d: derivative of current activation w.r.t. the two inputs, shape (n, 2, width)
    n = pts.shape[0]
    d = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    for (w, _), a in zip(layers[:-1], acts[1:]):
        d = (d @ w.T) * (1.0 - a * a)[:, None, :]
    w_out, _ = layers[-1]
    g = d @ w_out[0]
    g[:, 0] *= scale[0]
    g[:, 1] *= scale[1]
    return g


def jacobian_params(theta: ParameterVector, points: np.ndarray) -> np.ndarray:
    """Jacobian of the output with respect to theta, shape (n, param_count).

    Column order matches the flat parameter layout.  Assembled by reverse
    accumulation: for each layer the sensitivity of the scalar output to that
    layer's pre-activation is built once for the whole batch, and the weight
    block is its outer product with the previous activation.
    """
    pts = _as_points(points)
    layers, acts, _ = _forward_pass(theta, pts)
    n = pts.shape[0]

    # g[l]: d(output)/d(pre-activation of layer l), shape (n, width_l)
    sens: list[np.ndarray] = [None] * len(layers)
    sens[-1] = np.ones((n, 1))
    downstream = layers[-1][0]  # weight of the layer after the one being filled
    for l in range(len(layers) - 2, -1, -1):
        a = acts[l + 1]
        sens[l] = (sens[l + 1] @ downstream) * (1.0 - a * a)
        downstream = layers[l][0]

    out = np.empty((n, theta.values.size))
    offset = 0
    for l, (w, b) in enumerate(layers):
        a_prev = acts[l]
        nw = w.size
        np.einsum("nj,nk->njk", sens[l], a_prev, out=out[:, offset : offset + nw].reshape(n, *w.shape))
        offset += nw
        out[:, offset : offset + b.size] = sens[l]
        offset += b.size
    return out


def save_checkpoint(theta: ParameterVector, path) -> None:
    """Write theta as plain text: an architecture header, then one value per line.

    Values use 17 significant digits, enough for exact float64 round trips.
    """
    arch = theta.arch
    lines = [f"arch: {arch.input_dim} [{' '.join(str(w) for w in arch.hidden_widths)}] {arch.output_dim}"]
    lines.extend(format(v, ".17g") for v in theta.values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ParameterVector:
    """Read a checkpoint written by `save_checkpoint`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("arch:"):
        raise CheckpointError(f"{path}: missing architecture header")
    header = lines[0][len("arch:") :].strip()
    try:
        left, rest = header.split("[", 1)
        mid, right = rest.split("]", 1)
        input_dim = int(left)
        output_dim = int(right)
        hidden = tuple(int(tok) for tok in mid.split())
    except ValueError as exc:
        raise CheckpointError(f"{path}: malformed architecture header {header!r}") from exc
    arch = NetworkArchitecture(hidden, input_dim=input_dim, output_dim=output_dim)
    try:
        values = np.array([float(ln) for ln in lines[1:]], dtype=np.float64)
    except ValueError as exc:
        raise CheckpointError(f"{path}: malformed parameter value") from exc
    if values.size != param_count(arch):
        raise CheckpointError(
            f"{path}: {values.size} values do not match architecture {arch} "
            f"({param_count(arch)} expected)"
        )
    return ParameterVector(values, arch)
