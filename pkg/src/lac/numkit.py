"""Small dense-network core with hand-written gradients.

Everything downstream (the agent, the stackers, the boosting base
learners) runs on these nets.  Parameters and activations are float32,
loss reductions are accumulated in float64.  Inputs are always 2-D
``(batch, dim)`` arrays; a single vector is a batch of one.
"""

import struct

import numpy as np

ACT_IDENTITY = "identity"
ACT_RELU = "relu"

_ACT_CODES = {ACT_IDENTITY: 0, ACT_RELU: 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}

CHECKPOINT_MAGIC = b"LACNN1\x00\x00"


class ConfigurationError(ValueError):
    """Incompatible shapes or invalid settings."""


class UsageError(RuntimeError):
    """API misuse (stale tape, out-of-range label, ...)."""


class Layer:
    """One fully connected layer: y = act(x @ W + b)."""

    def __init__(self, weight, bias, activation=ACT_RELU, dropout=0.0):
        if activation not in _ACT_CODES:
            raise ConfigurationError("unknown activation %r" % activation)
        if not 0.0 <= dropout < 1.0:
            raise ConfigurationError("dropout must be in [0,1)")
        self.weight = np.asarray(weight, dtype=np.float32)
        self.bias = np.asarray(bias, dtype=np.float32)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ConfigurationError("layer shapes inconsistent")
        self.activation = activation
        self.dropout = dropout

    @property
    def in_dim(self):
        return self.weight.shape[0]

    @property
    def out_dim(self):
        return self.weight.shape[1]


class DenseNet:
    """Feed-forward stack of dense layers."""

    def __init__(self, layers):
        if not layers:
            raise ConfigurationError("empty network")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ConfigurationError(
                    "layer dims mismatch: %d -> %d" % (a.out_dim, b.in_dim))
        self.layers = list(layers)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def parameters(self):
        """Flat list of parameter arrays, weights and biases interleaved."""
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out


def init_dense(dims, activations=None, dropout_rates=None, rng=None):
    """Build a DenseNet with Glorot-uniform weights and zero biases.

    `dims` is [in, h1, ..., out]; activations default to relu on every
    layer except an identity output layer.
    """
    rng = np.random.default_rng() if rng is None else rng
    n_layers = len(dims) - 1
    if n_layers < 1:
        raise ConfigurationError("need at least one layer")
    if activations is None:
        activations = [ACT_RELU] * (n_layers - 1) + [ACT_IDENTITY]
    if dropout_rates is None:
        dropout_rates = [0.0] * n_layers
    layers = []
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)
        b = np.zeros(fan_out, dtype=np.float32)
        layers.append(Layer(w, b, activations[i], dropout_rates[i]))
    return DenseNet(layers)


class Tape:
    """Activation record from one forward pass, consumed by backward()."""

    def __init__(self, inputs, pre_acts, drop_masks):
        self.inputs = inputs          # input to each layer
        self.pre_acts = pre_acts      # x @ W + b per layer
        self.drop_masks = drop_masks  # None or inverted-dropout mask
        self.used = False


def forward(net, x, mode="eval", rng=None):
    """Run the net on a batch; returns (output, tape).

    `mode` "train" applies inverted dropout (needs `rng`); "eval" is a
    pure function of (params, input).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float32))
    if x.shape[1] != net.in_dim:
        raise ConfigurationError(
            "input dim %d, net expects %d" % (x.shape[1], net.in_dim))
    inputs, pre_acts, drop_masks = [], [], []
    h = x
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight + layer.bias
        pre_acts.append(z)
        if layer.activation == ACT_RELU:
            h = np.maximum(z, 0.0)
        else:
            h = z
        if mode == "train" and layer.dropout > 0.0:
            if rng is None:
                raise UsageError("train-mode dropout needs an rng")
            keep = 1.0 - layer.dropout
            mask = (rng.random(h.shape) < keep).astype(np.float32) / keep
            h = h * mask
            drop_masks.append(mask)
        else:
            drop_masks.append(None)
    return h, Tape(inputs, pre_acts, drop_masks)


def backward(net, tape, output_gradient):
    """Backprop `output_gradient` through the taped forward pass.

    Returns (grads, input_gradient) where grads matches
    ``net.parameters()`` order.  A tape can be used once.
    """
    if tape.used:
        raise UsageError("tape already consumed")
    tape.used = True
    g = np.atleast_2d(np.asarray(output_gradient, dtype=np.float32))
    if g.shape != (tape.inputs[0].shape[0], net.out_dim):
        raise UsageError("output_gradient shape mismatch")
    weight_grads = [None] * len(net.layers)
    bias_grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if tape.drop_masks[i] is not None:
            g = g * tape.drop_masks[i]
        if layer.activation == ACT_RELU:
            g = g * (tape.pre_acts[i] > 0)
        weight_grads[i] = (tape.inputs[i].T @ g).astype(np.float32)
        bias_grads[i] = g.sum(axis=0, dtype=np.float64).astype(np.float32)
        g = g @ layer.weight.T
    grads = []
    for wg, bg in zip(weight_grads, bias_grads):
        grads.append(wg)
        grads.append(bg)
    return grads, g


def softmax(logits):
    """Row-wise softmax with max-subtraction for stability."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    if np.asarray(logits).ndim == 1:
        return p[0]
    return p


def cross_entropy(probs, label):
    """-log p[label], probability floored at 1e-12."""
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[-1]:
        raise UsageError("label %d out of range" % label)
    return float(-np.log(max(float(probs[..., label]), 1e-12)))


class OptimizerState:
    """SGD or Adam state over one net's parameter list."""

    def __init__(self, params, kind="adam", learning_rate=1e-3,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("sgd", "adam"):
            raise ConfigurationError("unknown optimizer %r" % kind)
        if learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        self.kind = kind
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step = 0
        if kind == "adam":
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]


class NonFiniteGradient(RuntimeError):
    """Raised when a gradient contains nan/inf; the step is aborted."""


def optimizer_step(params, grads, state):
    """In-place update of `params`; raises NonFiniteGradient on bad grads."""
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient in parameter %d" % i)
    state.step += 1
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= state.learning_rate * g
        return
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (state.learning_rate * (m / bc1)
              / (np.sqrt(v / bc2) + state.eps)).astype(np.float32)


def save_net(net, fh):
    """Write a net to a binary stream.

    Layout: magic "LACNN1\\0\\0", u32 layer count, then per layer
    u32 in_dim, u32 out_dim, u8 activation code (0 identity, 1 relu),
    float32 weights row-major, float32 biases.  All little-endian.
    """
    fh.write(CHECKPOINT_MAGIC)
    fh.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        fh.write(struct.pack("<IIB", layer.in_dim, layer.out_dim,
                             _ACT_CODES[layer.activation]))
        fh.write(layer.weight.astype("<f4").tobytes())
        fh.write(layer.bias.astype("<f4").tobytes())


def load_net(fh):
    """Read a net written by save_net."""
    magic = fh.read(8)
    if magic != CHECKPOINT_MAGIC:
        raise ConfigurationError("bad checkpoint magic %r" % magic)
    (n_layers,) = struct.unpack("<I", fh.read(4))
    layers = []
    for _ in range(n_layers):
        in_dim, out_dim, act = struct.unpack("<IIB", fh.read(9))
        w = np.frombuffer(fh.read(4 * in_dim * out_dim), dtype="<f4")
        b = np.frombuffer(fh.read(4 * out_dim), dtype="<f4")
        if w.size != in_dim * out_dim or b.size != out_dim:
            raise ConfigurationError("truncated checkpoint")
        layers.append(Layer(w.reshape(in_dim, out_dim).copy(), b.copy(),
                            _ACT_NAMES[act]))
    return DenseNet(layers)
