"""Dense feed-forward networks with hand-written reverse mode and Adam.

The operator set is closed (affine maps, ReLU, identity, an optional
inverse-link output), so gradients are written out per layer instead of
going through a general tape.  All arrays are float64.
"""

import numpy as np

from .ed_family import Link
from .errors import ParameterError, ShapeError, StateError, TrainingError


def glorot_uniform_init(shape, rng):
    """Glorot/Xavier uniform draw on ``[-sqrt(6/(fan_in+fan_out)), +...]``.

    ``shape`` is ``(out, in)``.
    """
    fan_out, fan_in = (int(s) for s in shape)
    if fan_out < 1 or fan_in < 1:
        raise ParameterError(f"Glorot init needs positive dimensions, got {shape}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _relu(z):
    return np.maximum(z, 0.0)


class DenseLayer:
    """Affine map followed by an activation.

    ``activation`` is ``"relu"``, ``"identity"`` or a :class:`Link`, in which
    case the link's inverse is applied (final-layer mean activation).
    """

    def __init__(self, weights, biases, activation="relu"):
        weights = np.array(weights, dtype=np.float64, ndmin=2)
        biases = np.array(biases, dtype=np.float64, ndmin=1)
        if biases.shape != (weights.shape[0],):
            raise ShapeError(f"bias shape {biases.shape} does not match weights {weights.shape}")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise ParameterError("layer parameters must be finite")
        if not (activation in ("relu", "identity") or isinstance(activation, Link)):
            raise ParameterError(f"unknown activation {activation!r}")
        self.weights = weights
        self.biases = biases
        self.activation = activation
        self._inputs = None
        self._pre = None
        self.grad_weights = np.zeros_like(weights)
        self.grad_biases = np.zeros_like(biases)

    @property
    def in_width(self):
        return self.weights.shape[1]

    @property
    def out_width(self):
        return self.weights.shape[0]

    def _activate(self, z):
        if self.activation == "relu":
            return _relu(z)
        if self.activation == "identity":
            return z
        return self.activation.inverse(z)

    def _activation_grad(self, z):
        if self.activation == "relu":
            return (z > 0.0).astype(np.float64)
        if self.activation == "identity":
            return None
        return self.activation.inverse_derivative(z)

    def forward(self, inputs, record=True):
        z = inputs @ self.weights.T + self.biases
        if record:
            self._inputs = inputs
            self._pre = z
        return self._activate(z)

    def backward(self, upstream):
        if self._pre is None:
            raise StateError("backward called before forward")
        d = self._activation_grad(self._pre)
        dz = upstream if d is None else upstream * d
        self.grad_weights = dz.T @ self._inputs
        self.grad_biases = dz.sum(axis=0)
        return dz @ self.weights


class FixedEffectsNet:
    """Composition of dense layers mapping ``q0`` inputs to one output."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for prev, nxt in zip(layers[:-1], layers[1:]):
            if prev.out_width != nxt.in_width:
                raise ShapeError(f"layer widths do not chain: {prev.out_width} -> {nxt.in_width}")
        if layers[-1].out_width != 1:
            raise ShapeError("the output layer must have width 1")
        self.layers = layers
        self._recorded = False

    @classmethod
    def build(cls, n_inputs, hidden=(64, 32, 16), rng=None, output_bias=0.0):
        """Glorot-initialised ReLU network with an identity output unit."""
        rng = np.random.default_rng() if rng is None else rng
        widths = [int(n_inputs), *[int(h) for h in hidden], 1]
        layers = []
        for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            if w_in == 0:
                weights = np.zeros((w_out, 0))
            else:
                weights = glorot_uniform_init((w_out, w_in), rng)
            biases = np.full(w_out, float(output_bias)) if last else np.zeros(w_out)
            layers.append(DenseLayer(weights, biases, "identity" if last else "relu"))
        return cls(layers)

    @property
    def input_width(self):
        return self.layers[0].in_width

    @property
    def hidden(self):
        return tuple(layer.out_width for layer in self.layers[:-1])

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend([layer.weights, layer.biases])
        return params

    def gradients(self):
        grads = []
        for layer in self.layers:
            grads.extend([layer.grad_weights, layer.grad_biases])
        return grads

    def weight_mask(self):
        """True for weight matrices, False for biases (aligned with ``parameters``)."""
        return [i % 2 == 0 for i in range(2 * len(self.layers))]

    def forward(self, X, record=True):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.input_width:
            raise ShapeError(f"expected {self.input_width} features, got {X.shape[1]}")
        a = X
        for layer in self.layers:
            a = layer.forward(a, record=record)
        if record:
            self._recorded = True
        return a[:, 0]

    def backward(self, upstream):
        """Back-propagate ``dL/df`` (one value per row); returns ``dL/dX``."""
        if not self._recorded:
            raise StateError("backward called before forward")
        g = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def weight_norm(self):
        return float(np.sqrt(sum(np.sum(layer.weights ** 2) for layer in self.layers)))


def forward(net, x):
    """``f(x)`` for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward expects one feature vector")
    return float(net.forward(x[None, :], record=False)[0])


class Adam:
    """Adaptive-moment optimiser with bias correction and optional L2 decay.

    ``weight_decay`` is a scalar or a per-parameter sequence; the decay
    ``lam * p`` is added to the gradient before the moment updates.
    ``lr_scale`` optionally multiplies the learning rate per parameter.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7, weight_decay=0.0, lr_scale=1.0):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        n = len(params)
        self.weight_decay = self._per_parameter(weight_decay, n, "weight-decay coefficient")
        self.lr_scale = self._per_parameter(lr_scale, n, "learning-rate multiplier")
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    @staticmethod
    def _per_parameter(value, n, what):
        if np.ndim(value) == 0:
            return [float(value)] * n
        if len(value) != n:
            raise ShapeError(f"one {what} per parameter is required")
        return [float(v) for v in value]

    def step(self, params, grads):
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeError("parameter/gradient count does not match optimiser state")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise TrainingError("non-finite gradient")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v, lam, scale in zip(params, grads, self.m, self.v, self.weight_decay, self.lr_scale):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if lam:
                g = g + lam * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= scale * self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params

    def state_dict(self):
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


def finite_difference_check(loss, params, grads, rng, n_probes=100, h=1e-5):
    """Compare analytic gradients with central differences at random coordinates.

    ``loss()`` evaluates the scalar loss using the *current* contents of
    ``params`` (perturbed in place).  Returns an array of relative errors
    ``|a - n| / max(|a|, |n|, floor)`` where ``floor = 1e-6 * max(1, |loss|)``
    sits well above the round-off of the central difference.
    """
    floor = 1e-6 * max(1.0, abs(float(loss())))
    sizes = np.array([p.size for p in params])
    if sizes.sum() == 0:
        raise ShapeError("no parameters to probe")
    probs = sizes / sizes.sum()
    errors = np.empty(n_probes)
    for k in range(n_probes):
        which = rng.choice(len(params), p=probs)
        flat = params[which].reshape(-1)
        idx = rng.integers(flat.size)
        orig = flat[idx]
        flat[idx] = orig + h
        up = loss()
        flat[idx] = orig - h
        down = loss()
        flat[idx] = orig
        numeric = (up - down) / (2 * h)
        analytic = grads[which].reshape(-1)[idx]
        errors[k] = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
    return errors
