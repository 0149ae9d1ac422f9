"""Small feed-forward building blocks in double precision.

Layers keep their forward caches so a backward pass immediately after a
forward pass yields exact analytic gradients; everything is plain numpy so
the gradients can be checked against central finite differences.
"""

from __future__ import annotations

import numpy as np


class Layer:
    """Base layer: trainable arrays live in ``params`` with matching ``grads``."""

    params: list
    grads: list
    decay_mask: list  # True where weight decay applies (weights, not biases)

    def __init__(self):
        self.params, self.grads, self.decay_mask = [], [], []

    def forward(self, x, training: bool):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        scale = np.sqrt(2.0 / n_in)
        self.w = rng.standard_normal((n_in, n_out)) * scale
        self.b = np.zeros(n_out)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
        self.decay_mask = [True, False]

    def forward(self, x, training):
        self._x = x
        return x @ self.w + self.b

    def backward(self, grad_out):
        self.grads[0][...] = self._x.T @ grad_out
        self.grads[1][...] = grad_out.sum(axis=0)
        return grad_out @ self.w.T


class Relu(Layer):
    def forward(self, x, training):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out):
        return np.where(self._mask, grad_out, 0.0)


class Flatten(Layer):
    def forward(self, x, training):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Conv1d(Layer):
    """Stride-1 'same' convolution on (batch, channels, length) arrays.

    ``use_bias=False`` is the right choice when a batch-norm layer follows:
    the normalization cancels any bias exactly, leaving a degenerate
    parameter direction.
    """

    def __init__(self, c_in: int, c_out: int, width: int, rng: np.random.Generator,
                 use_bias: bool = True):
        super().__init__()
        scale = np.sqrt(2.0 / (c_in * width))
        self.w = rng.standard_normal((c_out, c_in, width)) * scale
        self.use_bias = use_bias
        self.width = width
        if use_bias:
            self.b = np.zeros(c_out)
            self.params = [self.w, self.b]
            self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
            self.decay_mask = [True, False]
        else:
            self.b = None
            self.params = [self.w]
            self.grads = [np.zeros_like(self.w)]
            self.decay_mask = [True]

    def _pad(self, x):
        left = (self.width - 1) // 2
        right = self.width - 1 - left
        return np.pad(x, ((0, 0), (0, 0), (left, right))), left

    def forward(self, x, training):
        xp, _ = self._pad(x)
        # windows: (batch, c_in, length, width)
        win = np.lib.stride_tricks.sliding_window_view(xp, self.width, axis=2)
        self._win = win
        y = np.einsum("bclw,ocw->bol", win, self.w, optimize=True)
        if self.use_bias:
            y = y + self.b[None, :, None]
        return y

    def backward(self, grad_out):
        self.grads[0][...] = np.einsum("bclw,bol->ocw", self._win, grad_out, optimize=True)
        if self.use_bias:
            self.grads[1][...] = grad_out.sum(axis=(0, 2))
        b, _, length = grad_out.shape
        c_in = self.w.shape[1]
        left = (self.width - 1) // 2
        dxp = np.zeros((b, c_in, length + self.width - 1))
        for w in range(self.width):
            dxp[:, :, w:w + length] += np.einsum("bol,oc->bcl", grad_out, self.w[:, :, w], optimize=True)
        return dxp[:, :, left:left + length]


class MaxPool1d(Layer):
    """Width-2, stride-2 pooling; an odd trailing element is dropped."""

    def forward(self, x, training):
        b, c, length = x.shape
        self._in_length = length
        n = length // 2
        blocks = x[:, :, :2 * n].reshape(b, c, n, 2)
        self._argmax = blocks.argmax(axis=3)
        return blocks.max(axis=3)

    def backward(self, grad_out):
        b, c, n = grad_out.shape
        dx = np.zeros((b, c, self._in_length))
        bi, ci, ni = np.meshgrid(np.arange(b), np.arange(c), np.arange(n), indexing="ij")
        dx[bi, ci, 2 * ni + self._argmax] = grad_out
        return dx


class BatchNorm1d(Layer):
    """Per-channel normalization over batch and length, with running stats."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.params = [self.gamma, self.beta]
        self.grads = [np.zeros_like(self.gamma), np.zeros_like(self.beta)]
        self.decay_mask = [False, False]

    def forward(self, x, training):
        if training:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean, var = self.running_mean, self.running_var
        self._std = np.sqrt(var + self.eps)
        self._xhat = (x - mean[None, :, None]) / self._std[None, :, None]
        self._training = training
        return self.gamma[None, :, None] * self._xhat + self.beta[None, :, None]

    def backward(self, grad_out):
        xhat, std = self._xhat, self._std
        self.grads[0][...] = (grad_out * xhat).sum(axis=(0, 2))
        self.grads[1][...] = grad_out.sum(axis=(0, 2))
        g = grad_out * self.gamma[None, :, None]
        if not self._training:
            return g / std[None, :, None]
        n = grad_out.shape[0] * grad_out.shape[2]
        gm = g.mean(axis=(0, 2))
        gxm = (g * xhat).mean(axis=(0, 2))
        return (g - gm[None, :, None] - xhat * gxm[None, :, None]) / std[None, :, None]


class Network:
    """A plain layer stack with softmax cross-entropy on top."""

    def __init__(self, layers):
        self.layers = layers

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def set_parameters(self, values):
        i = 0
        for layer in self.layers:
            for j in range(len(layer.params)):
                layer.params[j][...] = values[i]
                i += 1

    def gradients(self):
        return [g for layer in self.layers for g in layer.grads]

    def decay_mask(self):
        return [d for layer in self.layers for d in layer.decay_mask]

    def forward(self, x, training: bool = False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def predict_proba(self, x):
        return softmax(self.forward(x, training=False))

    def loss_and_gradients(self, x, labels, training: bool = True):
        logits = self.forward(x, training)
        loss, dlogits = softmax_cross_entropy(logits, labels)
        grad = dlogits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return loss, self.gradients()


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient with respect to the logits."""
    p = softmax(logits)
    n = logits.shape[0]
    loss = -float(np.mean(np.log(p[np.arange(n), labels] + 1e-300)))
    dlogits = p.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def build_mlp(n_in: int, hidden, n_classes: int = 4, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    layers = []
    prev = n_in
    for width in hidden:
        layers += [Dense(prev, width, rng), Relu()]
        prev = width
    layers.append(Dense(prev, n_classes, rng))
    return Network(layers)


CNN3_CONV_WIDTHS = (16, 8, 4)
CNN3_CHANNELS = (16, 64, 256)
CNN3_HIDDEN = 64
CNN3_MIN_LENGTH = 8  # three width-2 pools must leave at least one sample


def cnn3_output_length(input_length: int) -> int:
    length = input_length
    for _ in CNN3_CONV_WIDTHS:
        length //= 2
    return length


def build_cnn3(input_length: int, n_classes: int = 4, seed: int = 0,
               conv_widths=CNN3_CONV_WIDTHS, channels=CNN3_CHANNELS,
               hidden: int = CNN3_HIDDEN) -> Network:
    """Three conv -> batch-norm -> ReLU -> max-pool blocks, then a dense head."""
    if input_length < 2 ** len(conv_widths):
        raise ValueError(f"input length must be at least {2 ** len(conv_widths)}")
    rng = np.random.default_rng(seed)
    layers = []
    c_prev = 1
    length = input_length
    for width, c_out in zip(conv_widths, channels):
        layers += [Conv1d(c_prev, c_out, width, rng, use_bias=False),
                   BatchNorm1d(c_out), Relu(), MaxPool1d()]
        c_prev = c_out
        length //= 2
    layers += [Flatten(), Dense(c_prev * length, hidden, rng), Relu(),
               Dense(hidden, n_classes, rng)]
    return Network(layers)
