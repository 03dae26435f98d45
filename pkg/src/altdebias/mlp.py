"""Three-hidden-layer perceptron used by both networks.

The classifier ends in a row-wise softmax over the target classes. The
discoverer ends in sigmoids: a single output when the target is binary
("global" head), otherwise one output per target class and the column of
the image's ground-truth class is used ("per-class" head).

Checkpoint format (little-endian): magic ``DBAN``, u32 version=1,
u8 head kind, u32 layer count, then per layer u32 rows, u32 cols,
rows*cols f32 weights, cols f32 biases.
"""

import struct

import numpy as np

from .autodiff import Tensor, no_grad

INPUT_DIM = 3 * 28 * 28
HIDDEN_DIM = 100

HEAD_SOFTMAX_CLASSES = 0
HEAD_SIGMOID_GLOBAL = 1
HEAD_SIGMOID_PER_CLASS = 2

_MAGIC = b"DBAN"
_VERSION = 1


class CheckpointError(IOError):
    pass


class Mlp:
    def __init__(self, head_kind, num_classes=10, hidden=HIDDEN_DIM,
                 input_dim=INPUT_DIM, rng=None, dtype=np.float32):
        self.head_kind = head_kind
        self.num_classes = num_classes
        if head_kind == HEAD_SIGMOID_GLOBAL:
            out_dim = 1
        else:
            out_dim = num_classes
        dims = [input_dim, hidden, hidden, hidden, out_dim]
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(Tensor(w.astype(dtype), requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out, dtype=dtype),
                                      requires_grad=True))

    @property
    def params(self):
        return self.weights + self.biases

    def _trunk(self, images):
        """Hidden layers; ``images`` is a (n, input_dim) ndarray."""
        x = Tensor(np.ascontiguousarray(images, dtype=self.weights[0].dtype))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = (x @ w + b).relu()
        return x @ self.weights[-1] + self.biases[-1]

    def forward(self, images):
        """Head probabilities: softmax rows for the classifier head,
        elementwise sigmoid for discoverer heads."""
        logits = self._trunk(images)
        if self.head_kind == HEAD_SOFTMAX_CLASSES:
            return logits.softmax()
        return logits.sigmoid()

    def forward_frozen(self, images):
        with no_grad():
            return self.forward(images).detach()


def classifier_forward(model, images):
    if model.head_kind != HEAD_SOFTMAX_CLASSES:
        raise ValueError("classifier_forward requires a softmax head")
    return model.forward(images)


def discoverer_forward(model, images, class_id=None):
    """Bias-group probability p(b=1 | image) for one target class."""
    out = model.forward(images)
    if model.head_kind == HEAD_SIGMOID_GLOBAL:
        return out.take_per_row(np.zeros(out.shape[0], dtype=np.int64))
    if model.head_kind != HEAD_SIGMOID_PER_CLASS:
        raise ValueError("discoverer_forward requires a sigmoid head")
    if class_id is None or not 0 <= class_id < model.num_classes:
        raise ValueError(f"class_id {class_id} out of range")
    idx = np.full(out.shape[0], class_id, dtype=np.int64)
    return out.take_per_row(idx)


def save_checkpoint(model, path):
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IBI", _VERSION, model.head_kind,
                            len(model.weights)))
        for w, b in zip(model.weights, model.biases):
            rows, cols = w.data.shape
            f.write(struct.pack("<II", rows, cols))
            f.write(w.data.astype("<f4").tobytes())
            f.write(b.data.astype("<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    try:
        version, head_kind, n_layers = struct.unpack_from("<IBI", blob, 4)
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        off = 4 + 9
        shapes = []
        weights = []
        biases = []
        for _ in range(n_layers):
            rows, cols = struct.unpack_from("<II", blob, off)
            off += 8
            w = np.frombuffer(blob, dtype="<f4", count=rows * cols,
                              offset=off).reshape(rows, cols)
            if w.size != rows * cols:
                raise CheckpointError(f"{path}: truncated weights")
            off += 4 * rows * cols
            b = np.frombuffer(blob, dtype="<f4", count=cols, offset=off)
            off += 4 * cols
            shapes.append((rows, cols))
            weights.append(w.copy())
            biases.append(b.copy())
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt ({exc})") from exc
    if len(blob) != off:
        raise CheckpointError(f"{path}: trailing or missing bytes")

    if head_kind == HEAD_SIGMOID_GLOBAL:
        num_classes = 2
    else:
        num_classes = shapes[-1][1]
    model = Mlp(head_kind, num_classes=num_classes, hidden=shapes[0][1],
                input_dim=shapes[0][0])
    for i, (w, b) in enumerate(zip(weights, biases)):
        if model.weights[i].data.shape != w.shape:
            raise CheckpointError(f"{path}: layer {i} shape mismatch")
        model.weights[i].data = w
        model.biases[i].data = b.copy()
    return model
