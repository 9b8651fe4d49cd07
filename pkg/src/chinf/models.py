"""Small window reconstruction and forecasting models with per-channel losses.

Three architectures share one convention: a window is a (rows, N) matrix and
the model maps the first `window` rows to a prediction of the target rows
(the same rows when horizon is 0, the trailing `horizon` rows otherwise).

linear_ci and mlp_ci apply one shared map to every channel column, so they
accept any channel count. mlp_mix first multiplies by an N x N mixing matrix
and is pinned to the channel count it was built with.

The per-channel loss is the SUM of squared errors on that channel's column.
Summing (rather than averaging) over channels is what makes the per-channel
losses add up to the whole-window loss exactly, which the influence module
relies on.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GradientVector, ParamSelector, Tape
from .core import MtsWindow, _readonly

ARCHITECTURES = ("linear_ci", "mlp_ci", "mlp_mix")
ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_FORMAT = "chinf-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    architecture: str
    window: int
    channels: int
    hidden: int = 0
    activation: str = "tanh"
    horizon: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(
                f"unknown architecture {self.architecture!r}, expected one of {ARCHITECTURES}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}"
            )
        if self.window < 1:
            raise ValueError(f"window must be positive, got {self.window}")
        if self.channels < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")
        if self.architecture != "linear_ci" and self.hidden < 1:
            raise ValueError(
                f"hidden must be at least 1 for {self.architecture}, got {self.hidden}"
            )

    @property
    def out_rows(self) -> int:
        """Rows predicted: the window itself, or the forecast horizon."""
        return self.horizon if self.horizon > 0 else self.window

    @property
    def total_rows(self) -> int:
        """Rows a window must carry: inputs plus forecast targets."""
        return self.window + self.horizon


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Named parameter shapes in canonical (initialization) order."""
    w, h, out = spec.window, spec.hidden, spec.out_rows
    if spec.architecture == "linear_ci":
        return {"weight": (out, w), "bias": (out,)}
    shapes = {"w1": (h, w), "b1": (h,), "w2": (out, h), "b2": (out,)}
    if spec.architecture == "mlp_mix":
        return {"mix": (spec.channels, spec.channels), **shapes}
    return shapes


# fan_in per weight name: the contraction length of its matmul
def _fan_in(spec: ModelSpec, name: str) -> int:
    if name in ("weight", "w1"):
        return spec.window
    if name == "w2":
        return spec.hidden
    return spec.channels  # mix


@dataclass(frozen=True)
class ModelState:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    trained_lr: float = 0.0

    def __post_init__(self):
        expected = param_shapes(self.spec)
        if set(self.params) != set(expected):
            raise ValueError(
                f"parameter names {sorted(self.params)} do not match "
                f"expected {sorted(expected)}"
            )
        frozen = {}
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(
                    f"parameter {name!r} has shape {arr.shape}, expected {shape}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"parameter {name!r} has non-finite entries")
            frozen[name] = _readonly(arr)
        object.__setattr__(self, "params", frozen)
        if self.trained_lr < 0:
            raise ValueError(f"trained_lr must be non-negative, got {self.trained_lr}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        # 0 is allowed so a no-op training step stays expressible
        if self.learning_rate < 0:
            raise ValueError(
                f"learning_rate must be non-negative, got {self.learning_rate}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")


def init_params(spec: ModelSpec, seed: int) -> ModelState:
    """Deterministic init: weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(spec).items():
        if name in ("bias", "b1", "b2"):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(_fan_in(spec, name))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return ModelState(spec, params)


def all_params_selector(spec: ModelSpec) -> ParamSelector:
    return ParamSelector(f"{spec.architecture}/all", tuple(param_shapes(spec)))


def last_layer_selector(spec: ModelSpec) -> ParamSelector:
    if spec.architecture == "linear_ci":
        names = ("weight", "bias")
    else:
        names = ("w2", "b2")
    return ParamSelector(f"{spec.architecture}/last_layer", names)


def _split_xy(spec: ModelSpec, window: MtsWindow) -> tuple[np.ndarray, np.ndarray]:
    values = window.values
    rows, n = values.shape
    if rows != spec.total_rows:
        raise ValueError(
            f"window has {rows} rows, model expects {spec.total_rows} "
            f"(window {spec.window} + horizon {spec.horizon})"
        )
    if spec.architecture == "mlp_mix" and n != spec.channels:
        raise ValueError(f"window has {n} channels, model expects {spec.channels}")
    if spec.horizon > 0:
        return values[: spec.window], values[spec.window :]
    return values, values


def _act_np(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    if spec.activation == "tanh":
        return np.tanh(x)
    return np.maximum(x, 0.0)


def _forward_np(spec: ModelSpec, params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    if spec.architecture == "mlp_mix":
        x = x @ params["mix"]
    if spec.architecture == "linear_ci":
        return params["weight"] @ x + params["bias"][:, None]
    h = _act_np(spec, params["w1"] @ x + params["b1"][:, None])
    return params["w2"] @ h + params["b2"][:, None]


def reconstruct(state: ModelState, window: MtsWindow) -> np.ndarray:
    """Model output for one window: (window, N) or (horizon, N)."""
    x, _ = _split_xy(state.spec, window)
    return _forward_np(state.spec, state.params, x)


def channel_loss(state: ModelState, window: MtsWindow, j: int) -> float:
    """Sum of squared errors on channel j over the predicted rows."""
    x, target = _split_xy(state.spec, window)
    n = x.shape[1]
    if not 0 <= j < n:
        raise ValueError(f"channel index {j} out of range for {n} channels")
    y = _forward_np(state.spec, state.params, x)
    d = y[:, j] - target[:, j]
    return float(d @ d)


def window_loss(state: ModelState, window: MtsWindow) -> float:
    """Sum of squared errors over all predicted entries of one window."""
    x, target = _split_xy(state.spec, window)
    y = _forward_np(state.spec, state.params, x)
    d = (y - target).ravel()
    return float(d @ d)


def _act_tape(spec: ModelSpec, node):
    if spec.activation == "tanh":
        return ad.tanh(node)
    return ad.relu(node)


def _forward_tape(tape: Tape, spec: ModelSpec, params, x_node):
    leaves = {name: tape.leaf(value, name) for name, value in params.items()}
    h = x_node
    if spec.architecture == "mlp_mix":
        h = ad.matmul(h, leaves["mix"])
    if spec.architecture == "linear_ci":
        return ad.add_bias(ad.matmul(leaves["weight"], h), leaves["bias"])
    h = _act_tape(spec, ad.add_bias(ad.matmul(leaves["w1"], h), leaves["b1"]))
    return ad.add_bias(ad.matmul(leaves["w2"], h), leaves["b2"])


def _window_tape(state: ModelState, window: MtsWindow):
    """Tape with the squared-error matrix for one window recorded."""
    x, target = _split_xy(state.spec, window)
    tape = Tape()
    x_node = tape.leaf(x)
    y = _forward_tape(tape, state.spec, state.params, x_node)
    sq = ad.square(ad.subtract(y, tape.leaf(target)))
    return tape, sq


def channel_gradients(
    state: ModelState, window: MtsWindow, selector: ParamSelector | None = None
) -> list[GradientVector]:
    """Gradient of every channel's loss, sharing one forward pass."""
    if selector is None:
        selector = last_layer_selector(state.spec)
    tape, sq = _window_tape(state, window)
    n = sq.shape[1]
    out = []
    for j in range(n):
        loss = ad.reduce_sum(ad.slice_columns(sq, j, j + 1))
        out.append(ad.backward(tape, loss, selector))
    return out


def channel_gradient(
    state: ModelState,
    window: MtsWindow,
    j: int,
    selector: ParamSelector | None = None,
) -> GradientVector:
    if selector is None:
        selector = last_layer_selector(state.spec)
    tape, sq = _window_tape(state, window)
    n = sq.shape[1]
    if not 0 <= j < n:
        raise ValueError(f"channel index {j} out of range for {n} channels")
    loss = ad.reduce_sum(ad.slice_columns(sq, j, j + 1))
    return ad.backward(tape, loss, selector)


def whole_gradient(
    state: ModelState, window: MtsWindow, selector: ParamSelector | None = None
) -> GradientVector:
    """Gradient of the whole-window loss, taken in one backward pass."""
    if selector is None:
        selector = last_layer_selector(state.spec)
    tape, sq = _window_tape(state, window)
    return ad.backward(tape, ad.reduce_sum(sq), selector)


def _unflatten(spec: ModelSpec, names: tuple[str, ...], flat: np.ndarray) -> dict[str, np.ndarray]:
    shapes = param_shapes(spec)
    out = {}
    pos = 0
    for name in names:
        size = int(np.prod(shapes[name]))
        out[name] = flat[pos : pos + size].reshape(shapes[name])
        pos += size
    return out


def train(
    state: ModelState,
    train_windows: list[MtsWindow],
    config: TrainConfig,
    trainable: ParamSelector | None = None,
) -> ModelState:
    """Plain minibatch gradient descent on mean squared error.

    Deterministic: shuffling comes only from config.seed. Windows in a batch
    are row-stacked so each step costs one tape and one backward pass.
    ``trainable`` restricts updates to a parameter subset; the default is
    every parameter.
    """
    if len(train_windows) == 0:
        raise ValueError("training windows must be nonempty")
    spec = state.spec
    pairs = [_split_xy(spec, win) for win in train_windows]
    n = pairs[0][0].shape[1]
    for x, _ in pairs:
        if x.shape[1] != n:
            raise ValueError("training windows disagree on channel count")
    inputs = np.stack([x for x, _ in pairs])
    targets = np.stack([t for _, t in pairs])

    selector = trainable if trainable is not None else all_params_selector(spec)
    params = {name: np.array(v) for name, v in state.params.items()}
    rng = np.random.default_rng(config.seed)
    count = len(train_windows)
    for epoch in range(config.epochs):
        perm = rng.permutation(count)
        for batch_idx, start in enumerate(range(0, count, config.batch_size)):
            batch = perm[start : start + config.batch_size]
            b = len(batch)
            x_rows = inputs[batch].reshape(b * spec.window, n)
            t_cols = targets[batch].transpose(1, 0, 2).reshape(spec.out_rows, b * n)

            try:
                tape = Tape()
                x_node = tape.leaf(x_rows)
                # mixing multiplies channel columns row-wise, so it can act
                # on the row-stacked layout before blocks are rearranged
                if spec.architecture == "mlp_mix":
                    x_node = ad.matmul(x_node, tape.leaf(params["mix"], "mix"))
                h = ad.blocks_to_columns(x_node, b, spec.window, n)
                y = _ci_tape(tape, spec, params, h)
                loss = ad.scale(
                    ad.reduce_sum(ad.square(ad.subtract(y, tape.leaf(t_cols)))),
                    1.0 / (b * spec.out_rows * n),
                )
            except ad.NonFiniteError as e:
                raise RuntimeError(
                    f"training loss is not finite at epoch {epoch}, batch {batch_idx}"
                ) from e
            if not np.isfinite(float(loss.value)):
                raise RuntimeError(
                    f"training loss is not finite at epoch {epoch}, batch {batch_idx}"
                )
            grad = ad.backward(tape, loss, selector)
            for name, g in _unflatten(spec, selector.names, grad.values).items():
                params[name] = params[name] - config.learning_rate * g
    return ModelState(spec, params, trained_lr=config.learning_rate)


def _ci_tape(tape: Tape, spec: ModelSpec, params, x_node):
    """Shared per-channel map on an already-mixed (w, columns) node."""
    if spec.architecture == "linear_ci":
        w = tape.leaf(params["weight"], "weight")
        b = tape.leaf(params["bias"], "bias")
        return ad.add_bias(ad.matmul(w, x_node), b)
    w1 = tape.leaf(params["w1"], "w1")
    b1 = tape.leaf(params["b1"], "b1")
    w2 = tape.leaf(params["w2"], "w2")
    b2 = tape.leaf(params["b2"], "b2")
    h = _act_tape(spec, ad.add_bias(ad.matmul(w1, x_node), b1))
    return ad.add_bias(ad.matmul(w2, h), b2)


def mean_window_mse(state: ModelState, windows: list[MtsWindow]) -> float:
    """Per-element mean squared error over a window list."""
    if len(windows) == 0:
        raise ValueError("windows must be nonempty")
    total = 0.0
    entries = 0
    for win in windows:
        x, target = _split_xy(state.spec, win)
        d = (_forward_np(state.spec, state.params, x) - target).ravel()
        total += float(d @ d)
        entries += d.size
    return total / entries


def save_checkpoint(state: ModelState, path: str) -> None:
    """Write a JSON checkpoint; float64 payloads survive bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {
            "architecture": state.spec.architecture,
            "window": state.spec.window,
            "channels": state.spec.channels,
            "hidden": state.spec.hidden,
            "activation": state.spec.activation,
            "horizon": state.spec.horizon,
        },
        "trained_lr": state.trained_lr,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
            for name, arr in state.params.items()
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_checkpoint(path: str) -> ModelState:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    spec = ModelSpec(**doc["spec"])
    params = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    return ModelState(spec, params, trained_lr=float(doc["trained_lr"]))
