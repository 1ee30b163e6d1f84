"""From-scratch differentiable classifier stack with exact input gradients.

``DenseNet`` is a single-hidden-layer softmax network implemented directly
in numpy: forward, weighted cross-entropy, and analytic gradients with
respect to both parameters and inputs (the input gradients license the
projected-gradient attack). ``HierarchicalModel`` composes an
inverter-level 5-class net, four gated switch-level 6-class nets and a
flat 25-class fallback behind a confidence threshold.

Forward and gradient evaluation are read-only on parameters; one trainer
mutates a network at a time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ConfigError, DataError, TrainingError
from .labels import N_INVERTERS, N_SWITCHES, decode_label, encode_label

DEFAULT_HIDDEN = 64
DEFAULT_GATE_THRESHOLD = 0.6
DEFAULT_LEARN_RATE = 0.01
DEFAULT_MOMENTUM = 0.9

#: Normalized features are clipped to this many sigmas before entering any
#: network. Attacks can push a few derivative statistics hundreds of sigmas
#: out of range; unbounded they saturate the hidden layer and blow up
#: gradients, collapsing training to the majority class. Clipped values
#: stay clearly out-of-distribution (clean data lives within ~3 sigma).
DEFAULT_INPUT_CLIP = 6.0

MODEL_FILE_HEADER = "FOMADS-MODEL v1"


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class DenseNet:
    """Softmax classifier with one tanh hidden layer.

    The tanh nonlinearity keeps the network smooth everywhere, which the
    finite-difference gradient checks and PGD both rely on.
    """

    def __init__(self, n_in: int, n_hidden: int, n_out: int, seed: int = 0):
        if min(n_in, n_hidden, n_out) < 1:
            raise ConfigError("layer sizes must be positive")
        rng = np.random.default_rng(seed)
        lim1 = 1.0 / np.sqrt(n_in)
        lim2 = 1.0 / np.sqrt(n_hidden)
        self.n_in, self.n_hidden, self.n_out = n_in, n_hidden, n_out
        self.w1 = rng.uniform(-lim1, lim1, size=(n_in, n_hidden))
        self.b1 = np.zeros(n_hidden)
        self.w2 = rng.uniform(-lim2, lim2, size=(n_hidden, n_out))
        self.b2 = np.zeros(n_out)
        self._velocity: dict[str, np.ndarray] | None = None

    @property
    def n_params(self) -> int:
        return self.n_in * self.n_hidden + self.n_hidden + self.n_hidden * self.n_out + self.n_out

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_in:
            raise ConfigError(f"input has {x.shape[1]} dims, net expects {self.n_in}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities, shape (n, n_out); rows sum to 1."""
        x = self._check_input(x)
        h = np.tanh(x @ self.w1 + self.b1)
        return _softmax(h @ self.w2 + self.b2)

    def per_sample_losses(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Cross-entropy of each sample against its integer label."""
        x = self._check_input(x)
        y = self._check_labels(y, x.shape[0])
        h = np.tanh(x @ self.w1 + self.b1)
        logp = _log_softmax(h @ self.w2 + self.b2)
        return -logp[np.arange(x.shape[0]), y]

    def _check_labels(self, y: np.ndarray, n: int) -> np.ndarray:
        y = np.asarray(y, dtype=int).reshape(-1)
        if y.size != n:
            raise ConfigError(f"{y.size} labels for {n} samples")
        if y.size and (y.min() < 0 or y.max() >= self.n_out):
            raise DataError(f"label out of range [0, {self.n_out})")
        return y

    def loss_and_grads(
        self,
        x: np.ndarray,
        y: np.ndarray,
        sample_weights: np.ndarray | None = None,
    ) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
        """Weighted cross-entropy with exact parameter and input gradients.

        The loss is ``(1/n) * sum_i weight_i * ce_i`` so that unit weights
        give the plain batch mean and all-zero weights give exactly zero.
        Returns (loss, {w1,b1,w2,b2 gradients}, d loss / d x).
        """
        x = self._check_input(x)
        n = x.shape[0]
        y = self._check_labels(y, n)
        if sample_weights is None:
            wts = np.ones(n)
        else:
            wts = np.asarray(sample_weights, dtype=float).reshape(-1)
            if wts.size != n:
                raise ConfigError(f"{wts.size} weights for {n} samples")
            if np.any(wts < 0):
                raise ConfigError("sample weights must be >= 0")

        z1 = x @ self.w1 + self.b1
        h = np.tanh(z1)
        logits = h @ self.w2 + self.b2
        logp = _log_softmax(logits)
        ce = -logp[np.arange(n), y]
        loss = float(wts @ ce) / n

        probs = np.exp(logp)
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits *= (wts / n)[:, None]

        gw2 = h.T @ dlogits
        gb2 = dlogits.sum(axis=0)
        dh = dlogits @ self.w2.T
        dz1 = dh * (1.0 - h * h)
        gw1 = x.T @ dz1
        gb1 = dz1.sum(axis=0)
        gx = dz1 @ self.w1.T
        return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}, gx

    def apply_grads(self, grads: dict[str, np.ndarray], learn_rate: float,
                    momentum: float = 0.0) -> None:
        """One (momentum-)SGD update in place."""
        if learn_rate < 0:
            raise ConfigError("learn_rate must be >= 0")
        if momentum:
            if self._velocity is None:
                self._velocity = {k: np.zeros_like(getattr(self, k))
                                  for k in ("w1", "b1", "w2", "b2")}
            for k in ("w1", "b1", "w2", "b2"):
                self._velocity[k] = momentum * self._velocity[k] - learn_rate * grads[k]
                getattr(self, k).__iadd__(self._velocity[k])
        else:
            for k in ("w1", "b1", "w2", "b2"):
                getattr(self, k).__isub__(learn_rate * grads[k])

    def params_flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def set_params_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise DataError(f"expected {self.n_params} parameters, got {flat.size}")
        i = 0
        for name, shape in (("w1", (self.n_in, self.n_hidden)), ("b1", (self.n_hidden,)),
                            ("w2", (self.n_hidden, self.n_out)), ("b2", (self.n_out,))):
            size = int(np.prod(shape))
            setattr(self, name, flat[i : i + size].reshape(shape).copy())
            i += size


def train_step(net: DenseNet, x: np.ndarray, y: np.ndarray,
               sample_weights: np.ndarray | None = None,
               learn_rate: float = DEFAULT_LEARN_RATE,
               momentum: float = 0.0) -> DenseNet:
    """One descent step on a batch; halts on non-finite loss."""
    if learn_rate < 0:
        raise ConfigError("learn_rate must be >= 0")
    loss, grads, _ = net.loss_and_grads(x, y, sample_weights)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite training loss {loss}")
    net.apply_grads(grads, learn_rate, momentum)
    return net


@dataclass
class Prediction:
    class_ids: np.ndarray
    confidences: np.ndarray


class HierarchicalModel:
    """Gated two-stage classifier with a flat fallback.

    Stage 1 scores {normal, inverter 1..n}. When its top probability
    clears ``gate_threshold``, a normal verdict short-circuits and a fault
    verdict routes to that inverter's switch-level net; otherwise the flat
    net predicts over all classes. Confidence is the product of the stage
    probabilities actually used.

    ``stage2_eval_count`` counts switch-level sample evaluations, which
    makes the gating-efficiency contract observable.
    """

    def __init__(self, n_features: int, n_hidden: int = DEFAULT_HIDDEN,
                 n_inverters: int = N_INVERTERS, n_switches: int = N_SWITCHES,
                 gate_threshold: float = DEFAULT_GATE_THRESHOLD, seed: int = 0,
                 input_clip: float = DEFAULT_INPUT_CLIP):
        if not 0.0 < gate_threshold < 1.0:
            raise ConfigError(f"gate_threshold must lie in (0, 1), got {gate_threshold}")
        if input_clip <= 0.0:
            raise ConfigError(f"input_clip must be > 0, got {input_clip}")
        self.n_features = n_features
        self.n_hidden = n_hidden
        self.n_inverters = n_inverters
        self.n_switches = n_switches
        self.gate_threshold = gate_threshold
        self.input_clip = input_clip
        self.n_classes = 1 + n_inverters * n_switches
        seeds = np.random.SeedSequence(seed).generate_state(2 + n_inverters)
        self.stage1 = DenseNet(n_features, n_hidden, 1 + n_inverters, seed=int(seeds[0]))
        self.stage2 = {
            inv: DenseNet(n_features, n_hidden, n_switches, seed=int(seeds[1 + inv]))
            for inv in range(1, n_inverters + 1)
        }
        self.fallback = DenseNet(n_features, n_hidden, self.n_classes, seed=int(seeds[1]))
        self.stage2_eval_count = 0

    def networks(self) -> list[tuple[str, DenseNet]]:
        pairs = [("stage1", self.stage1)]
        pairs += [(f"stage2_{i}", self.stage2[i]) for i in sorted(self.stage2)]
        pairs.append(("fallback", self.fallback))
        return pairs

    def condition(self, x: np.ndarray) -> np.ndarray:
        """Clip normalized features into the networks' working range."""
        return np.clip(np.asarray(x, dtype=float), -self.input_clip, self.input_clip)

    def predict(self, x: np.ndarray) -> Prediction:
        """Hierarchical (class id, confidence) for each row of x."""
        x = self.condition(np.atleast_2d(np.asarray(x, dtype=float)))
        n = x.shape[0]
        out = np.zeros(n, dtype=int)
        conf = np.zeros(n)

        p1 = self.stage1.forward(x)
        top1 = p1.max(axis=1)
        arg1 = p1.argmax(axis=1)

        low = top1 < self.gate_threshold
        if np.any(low):
            pf = self.fallback.forward(x[low])
            out[low] = pf.argmax(axis=1)
            conf[low] = pf.max(axis=1)

        normal = ~low & (arg1 == 0)
        out[normal] = 0
        conf[normal] = top1[normal]

        for inv in range(1, self.n_inverters + 1):
            route = ~low & (arg1 == inv)
            if not np.any(route):
                continue
            p2 = self.stage2[inv].forward(x[route])
            self.stage2_eval_count += int(route.sum())
            switch = p2.argmax(axis=1) + 1
            out[route] = [encode_label(inv, s, self.n_switches) for s in switch]
            conf[route] = top1[route] * p2.max(axis=1)
        return Prediction(out, conf)

    def predict_flat(self, x: np.ndarray) -> Prediction:
        """Fallback-only prediction (the flat-classifier ablation)."""
        pf = self.fallback.forward(self.condition(x))
        return Prediction(pf.argmax(axis=1), pf.max(axis=1))

    def stage1_label(self, class_id: int) -> int:
        if class_id == 0:
            return 0
        return decode_label(class_id, self.n_switches)[0]

    def save(self, path: str, metadata: dict[str, object] | None = None) -> None:
        """Versioned text persistence; parameters at 17 significant digits."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(MODEL_FILE_HEADER + "\n")
            meta = {
                "gate_threshold": self.gate_threshold,
                "n_inverters": self.n_inverters,
                "n_switches": self.n_switches,
                "n_hidden": self.n_hidden,
                "input_clip": self.input_clip,
            }
            if metadata:
                meta.update(metadata)
            for key, value in meta.items():
                fh.write(f"{key} {value}\n")
            for name, net in self.networks():
                fh.write(f"net {name}\n")
                fh.write(f"dims {net.n_in} {net.n_hidden} {net.n_out}\n")
                flat = net.params_flat()
                for i in range(0, flat.size, 8):
                    fh.write(" ".join(format(v, ".17g") for v in flat[i : i + 8]) + "\n")

    @classmethod
    def load(cls, path: str) -> tuple["HierarchicalModel", dict[str, str]]:
        """Load a model file; returns the model and its metadata lines."""
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != MODEL_FILE_HEADER:
            raise DataError(f"{path}: not a {MODEL_FILE_HEADER} file")
        meta: dict[str, str] = {}
        i = 1
        while i < len(lines) and not lines[i].startswith("net "):
            key, _, value = lines[i].partition(" ")
            meta[key] = value
            i += 1
        blocks: dict[str, tuple[tuple[int, int, int], np.ndarray]] = {}
        while i < len(lines):
            if not lines[i].startswith("net "):
                raise DataError(f"{path}: expected a net block at line {i + 1}")
            name = lines[i].split(" ", 1)[1]
            dims = lines[i + 1].split()
            if dims[0] != "dims":
                raise DataError(f"{path}: missing dims line for net {name}")
            n_in, n_hidden, n_out = (int(d) for d in dims[1:])
            count = n_in * n_hidden + n_hidden + n_hidden * n_out + n_out
            vals: list[float] = []
            i += 2
            while i < len(lines) and len(vals) < count:
                vals.extend(float(t) for t in lines[i].split())
                i += 1
            if len(vals) != count:
                raise DataError(f"{path}: net {name} has {len(vals)} params, expected {count}")
            blocks[name] = ((n_in, n_hidden, n_out), np.array(vals))

        try:
            n_inverters = int(meta["n_inverters"])
            n_switches = int(meta["n_switches"])
            gate = float(meta["gate_threshold"])
            n_hidden = int(meta["n_hidden"])
            input_clip = float(meta.get("input_clip", DEFAULT_INPUT_CLIP))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: missing or malformed model metadata") from exc
        n_features = blocks["stage1"][0][0]
        model = cls(n_features, n_hidden, n_inverters, n_switches, gate, seed=0,
                    input_clip=input_clip)
        for name, net in model.networks():
            if name not in blocks:
                raise DataError(f"{path}: missing net block {name}")
            (n_in, nh, n_out), flat = blocks[name]
            if (n_in, nh, n_out) != (net.n_in, net.n_hidden, net.n_out):
                raise DataError(f"{path}: net {name} dims {(n_in, nh, n_out)} do not match")
            net.set_params_flat(flat)
        return model, meta


class HierarchicalClassifier(BaseEstimator, ClassifierMixin):
    """scikit-learn estimator facade over :class:`HierarchicalModel`.

    ``fit`` runs plain minibatch cross-entropy training of all three
    stages: stage 1 on normal-vs-inverter labels, each switch-level net on
    the windows of its own inverter (teacher-forced routing), and the flat
    fallback on all 25 classes. This is the attack-free baseline; the
    adversarial curriculum lives in :mod:`fomads.pmrat`.
    """

    def __init__(self, n_hidden: int = DEFAULT_HIDDEN,
                 gate_threshold: float = DEFAULT_GATE_THRESHOLD,
                 n_inverters: int = N_INVERTERS, n_switches: int = N_SWITCHES,
                 learn_rate: float = DEFAULT_LEARN_RATE,
                 momentum: float = DEFAULT_MOMENTUM,
                 epochs: int = 30, batch_size: int = 64, seed: int = 0):
        self.n_hidden = n_hidden
        self.gate_threshold = gate_threshold
        self.n_inverters = n_inverters
        self.n_switches = n_switches
        self.learn_rate = learn_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X: np.ndarray, y: np.ndarray) -> "HierarchicalClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ConfigError("X must be (n, d) with one label per row")
        self.model_ = HierarchicalModel(
            X.shape[1], self.n_hidden, self.n_inverters, self.n_switches,
            self.gate_threshold, seed=self.seed,
        )
        m = self.model_
        X = m.condition(X)
        y1 = np.array([m.stage1_label(c) for c in y])
        rng = np.random.default_rng(self.seed)
        for _ in range(self.epochs):
            order = rng.permutation(X.shape[0])
            for lo in range(0, order.size, self.batch_size):
                idx = order[lo : lo + self.batch_size]
                train_step(m.stage1, X[idx], y1[idx], None, self.learn_rate, self.momentum)
                train_step(m.fallback, X[idx], y[idx], None, self.learn_rate, self.momentum)
                for inv in range(1, self.n_inverters + 1):
                    sub = idx[y1[idx] == inv]
                    if sub.size:
                        switches = np.array(
                            [decode_label(c, self.n_switches)[1] - 1 for c in y[sub]]
                        )
                        train_step(m.stage2[inv], X[sub], switches, None,
                                   self.learn_rate, self.momentum)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise ConfigError("classifier is not fitted")
        return self.model_.predict(X).class_ids

    def predict_with_confidence(self, X: np.ndarray) -> Prediction:
        if not hasattr(self, "model_"):
            raise ConfigError("classifier is not fitted")
        return self.model_.predict(X)
