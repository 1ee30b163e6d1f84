"""Progressive memory-replay adversarial training.

The curriculum walks the fixed attack escalation
normal -> bias -> noise -> replacement -> replay. Each stage corrupts a
fresh copy of the clean training windows with its own injector and adds
the result to a cumulative pool, so later stages retain every earlier
pattern. Within attack stages, batches mix fresh pool samples with
replayed high-loss adversarial examples from a bounded buffer, are
perturbed by a projected-gradient attack inside an L-inf ball whose
radius escalates linearly over the whole run, and are weighted by an
attack-aware loss: batch cross-entropy plus an adaptively weighted term
over the hardest fraction of samples (online hard example mining).

Stage 1, the four switch-level nets and the flat fallback each mine their
own hard examples. All randomness is derived from the config seed, so a
run is reproducible parameter for parameter.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import attacks
from .errors import ConfigError, TrainingError
from .features import FeatureNormalizer, FractionalFeatureExtractor
from .kvconfig import coerce, read_kv_file
from .labels import decode_label
from .model import DenseNet, HierarchicalModel, Prediction
from .sigsim import Waveform

CURRICULUM_ORDER = ("normal", "bias", "noise", "replacement", "replay")

METRICS_HEADER = ["stage", "epoch", "epsilon", "clean_acc", "adv_acc", "buffer_size", "mean_loss"]


@dataclass(frozen=True)
class CurriculumStage:
    """One curriculum phase: an attack family and its training epochs."""

    index: int
    name: str
    attack: attacks.AttackSpec | None
    epochs: int


@dataclass
class TrainConfig:
    """Knobs of the adversarial curriculum.

    The projected-gradient attack runs ``pgd_steps`` iterations with step
    size ``2.5 * eps / steps`` unless overridden, inside a budget that
    grows linearly from ``eps_start`` to ``eps_end`` over all epochs of
    the run. ``ohem_frac`` is the mined fraction of each batch and
    ``lambda_beta`` caps the adaptive weight of the mined term.
    """

    stages: tuple[str, ...] = CURRICULUM_ORDER
    epochs_per_stage: int = 12
    batch_size: int = 64
    learn_rate: float = 0.01
    momentum: float = 0.9
    n_hidden: int = 64
    gate_threshold: float = 0.6
    pgd_steps: int = 7
    pgd_eps: float = 0.1
    pgd_step_size: float = 0.0  # 0 means 2.5 * eps / steps
    eps_start: float = 0.02
    eps_end: float = 0.15
    ohem_frac: float = 0.2
    lambda_beta: float = 0.5
    max_difficulty: float = 1.0
    use_ohem: bool = True
    replay_frac: float = 0.25
    replay_capacity: int = 512
    buffer_insert_frac: float = 0.10
    alpha: float = 0.7
    beta: float = 0.3
    kernel_len: int = 10
    include_fractional: bool = True
    flat: bool = False
    test_frac: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.stages, str):
            self.stages = tuple(s.strip() for s in self.stages.split(",") if s.strip())
        else:
            self.stages = tuple(self.stages)
        if not self.stages:
            raise ConfigError("at least one curriculum stage is required")
        if self.stages[0] != "normal":
            raise ConfigError("the curriculum must start with the clean 'normal' stage")
        positions = []
        for name in self.stages:
            if name not in CURRICULUM_ORDER:
                raise ConfigError(f"unknown curriculum stage {name!r}")
            positions.append(CURRICULUM_ORDER.index(name))
        if positions != sorted(set(positions)):
            raise ConfigError(
                f"stages must follow the fixed order {' -> '.join(CURRICULUM_ORDER)}"
            )
        if self.epochs_per_stage < 1 or self.batch_size < 1:
            raise ConfigError("epochs_per_stage and batch_size must be >= 1")
        if self.pgd_steps < 1:
            raise ConfigError("pgd_steps must be >= 1")
        for name in ("learn_rate", "pgd_eps", "eps_start", "eps_end", "max_difficulty"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not self.eps_start <= self.eps_end:
            raise ConfigError("eps_start must not exceed eps_end")
        if not 0.0 < self.ohem_frac <= 1.0:
            raise ConfigError("ohem_frac must lie in (0, 1]")
        if not 0.0 <= self.replay_frac < 1.0:
            raise ConfigError("replay_frac must lie in [0, 1)")
        if not 0.0 < self.test_frac < 1.0:
            raise ConfigError("test_frac must lie in (0, 1)")

    @property
    def total_epochs(self) -> int:
        return self.epochs_per_stage * len(self.stages)

    def step_size(self, eps: float) -> float:
        return self.pgd_step_size if self.pgd_step_size > 0 else 2.5 * eps / self.pgd_steps

    def build_stages(self) -> list[CurriculumStage]:
        out = []
        for i, name in enumerate(self.stages):
            spec = None if name == "normal" else attacks.AttackSpec.default_for(name)
            out.append(CurriculumStage(i, name, spec, self.epochs_per_stage))
        return out

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        raw = read_kv_file(path)
        kwargs = {}
        for fld in fields(cls):
            if fld.name == "stages":
                if "stages" in raw:
                    kwargs["stages"] = raw["stages"]
                continue
            kind = {"int": int, "float": float, "bool": bool}.get(fld.type, str)
            kwargs[fld.name] = coerce(raw, fld.name, kind, fld.default)
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**kwargs)


def adaptive_lambda(attack_difficulty: float, max_difficulty: float, beta: float) -> float:
    """Attack-aware loss weight: beta * difficulty / max, clamped to [0, beta]."""
    if max_difficulty <= 0:
        raise ConfigError(f"max_difficulty must be > 0, got {max_difficulty}")
    if not 0.0 <= attack_difficulty <= max_difficulty:
        raise ConfigError(
            f"attack_difficulty {attack_difficulty} outside [0, {max_difficulty}]"
        )
    return min(max(beta * attack_difficulty / max_difficulty, 0.0), beta)


def epsilon_schedule(epoch: int, total_epochs: int, eps_start: float, eps_end: float) -> float:
    """Linear perturbation budget: eps_start at epoch 0, eps_end at the last."""
    if total_epochs < 1:
        raise ConfigError("total_epochs must be >= 1")
    if epoch < 0 or epoch >= total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs == 1:
        return eps_end
    return eps_start + (eps_end - eps_start) * epoch / (total_epochs - 1)


def ohem_select(per_sample_losses: np.ndarray, frac: float) -> np.ndarray:
    """Indices of the ceil(frac * n) largest losses; ties go to lower index."""
    losses = np.asarray(per_sample_losses, dtype=float).reshape(-1)
    if losses.size == 0:
        raise ConfigError("cannot mine an empty batch")
    if not 0.0 < frac <= 1.0:
        raise ConfigError(f"frac must lie in (0, 1], got {frac}")
    k = math.ceil(frac * losses.size)
    order = np.argsort(-losses, kind="stable")
    return np.sort(order[:k])


def pgd_attack(net: DenseNet, x: np.ndarray, y: np.ndarray, eps: float,
               steps: int, step_size: float) -> np.ndarray:
    """Iterative L-inf ascent on the cross-entropy, projected every step.

    The perturbation starts at zero and each iterate moves by
    ``step_size * sign(gradient)`` before clipping back into the eps-ball,
    so the returned examples satisfy the budget exactly. ``sign(0) = 0``:
    a flat loss surface leaves the input untouched.
    """
    if eps < 0:
        raise ConfigError(f"eps must be >= 0, got {eps}")
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    delta = np.zeros_like(x)
    for _ in range(steps):
        _, _, gx = net.loss_and_grads(x + delta, y)
        if not np.all(np.isfinite(gx)):
            raise TrainingError("non-finite input gradients in PGD")
        delta = np.clip(delta + step_size * np.sign(gx), -eps, eps)
    return x + delta


def total_loss(net: DenseNet, x: np.ndarray, y: np.ndarray, hard_set: np.ndarray,
               lam: float) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch cross-entropy plus lam times the mean over the hard subset.

    Realized as a single weighted pass: the hard samples carry weight
    ``1 + lam * n / |hard|`` so gradients follow by linearity.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    hard = np.asarray(hard_set, dtype=int).reshape(-1)
    if hard.size and (hard.min() < 0 or hard.max() >= n):
        raise ConfigError("hard_set indices outside the batch")
    weights = np.ones(n)
    if hard.size and lam != 0.0:
        weights[hard] += lam * n / hard.size
    loss, grads, _ = net.loss_and_grads(x, y, weights)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite total loss {loss}")
    return loss, grads


class ReplayBuffer:
    """Bounded keep-highest-loss store of adversarial feature vectors.

    Backed by a min-heap on insertion loss: when full, a new entry evicts
    the lowest-loss one only if it hurts more. Sampling never removes
    entries.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._heap: list[tuple[float, int, np.ndarray, int, int]] = []
        self._counter = 0

    def __len__(self) -> int:
        return len(self._heap)

    def insert(self, x: np.ndarray, class_id: int, loss: float, stage: int) -> None:
        entry = (float(loss), self._counter, np.asarray(x, dtype=float).copy(),
                 int(class_id), int(stage))
        self._counter += 1
        if len(self._heap) < self.capacity:
            heapq.heappush(self._heap, entry)
        elif entry[0] > self._heap[0][0]:
            heapq.heapreplace(self._heap, entry)

    def min_loss(self) -> float:
        if not self._heap:
            raise ConfigError("buffer is empty")
        return self._heap[0][0]

    def losses(self) -> np.ndarray:
        return np.array([e[0] for e in self._heap])

    def sample(self, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Up to k entries drawn uniformly without replacement."""
        if k < 0:
            raise ConfigError(f"k must be >= 0, got {k}")
        if not self._heap or k == 0:
            return np.empty((0, 0)), np.empty(0, dtype=int)
        if k >= len(self._heap):
            chosen = list(range(len(self._heap)))
        else:
            chosen = sorted(rng.choice(len(self._heap), size=k, replace=False).tolist())
        xs = np.array([self._heap[i][2] for i in chosen])
        ys = np.array([self._heap[i][3] for i in chosen], dtype=int)
        return xs, ys


def replay_sample(buffer: ReplayBuffer, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded uniform draw from the buffer; the full contents if k >= size."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return buffer.sample(k, rng)


def stratified_split(class_ids: np.ndarray, test_frac: float,
                     seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled 80/20 index split, deterministic in the seed."""
    class_ids = np.asarray(class_ids, dtype=int)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0xFEED))))
    train_idx, test_idx = [], []
    for cid in np.unique(class_ids):
        members = np.flatnonzero(class_ids == cid)
        perm = members[rng.permutation(members.size)]
        n_test = int(round(test_frac * members.size))
        test_idx.extend(perm[:n_test].tolist())
        train_idx.extend(perm[n_test:].tolist())
    return np.sort(np.array(train_idx, dtype=int)), np.sort(np.array(test_idx, dtype=int))


@dataclass
class MetricsRow:
    stage: str
    epoch: int
    epsilon: float
    clean_acc: float
    adv_acc: float
    buffer_size: int
    mean_loss: float


def save_metrics_csv(path: str, rows: list[MetricsRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRICS_HEADER) + "\n")
        for r in rows:
            fh.write(f"{r.stage},{r.epoch},{r.epsilon!r},{r.clean_acc!r},"
                     f"{r.adv_acc!r},{r.buffer_size},{r.mean_loss!r}\n")


@dataclass
class TrainResult:
    """Everything a trained pipeline needs to predict and be evaluated."""

    model: HierarchicalModel
    extractor: FractionalFeatureExtractor
    normalizer: FeatureNormalizer
    config: TrainConfig
    metrics: list[MetricsRow]
    train_ids: np.ndarray
    test_ids: np.ndarray
    buffer: ReplayBuffer = field(repr=False, default=None)

    def predict(self, x: np.ndarray) -> Prediction:
        if self.config.flat:
            return self.model.predict_flat(x)
        return self.model.predict(x)

    def features_of(self, windows: list[Waveform]) -> np.ndarray:
        return self.normalizer.transform(self.extractor.transform(windows))


class CurriculumTrainer:
    """Drives the staged adversarial training of a hierarchical model.

    Construct with a :class:`TrainConfig`, then ``fit`` on raw waveform
    windows. Attack corruption happens at the waveform level before
    feature extraction; the projected-gradient attack perturbs normalized
    feature vectors, which are what the classifier consumes.
    """

    def __init__(self, config: TrainConfig):
        self.config = config

    def fit(self, windows: list[Waveform]) -> TrainResult:
        cfg = self.config
        if len(windows) < 2:
            raise ConfigError("need at least two windows to train")

        class_ids = np.array([w.label.class_id for w in windows], dtype=int)
        train_idx, test_idx = stratified_split(class_ids, cfg.test_frac, cfg.seed)
        train_windows = [windows[i] for i in train_idx]
        y_train = class_ids[train_idx]
        y_test = class_ids[test_idx]

        extractor = FractionalFeatureExtractor(
            cfg.alpha, cfg.beta, cfg.kernel_len, cfg.include_fractional
        )
        feats_clean = extractor.transform(train_windows)
        normalizer = FeatureNormalizer(extractor.schema_id).fit(feats_clean)

        model = HierarchicalModel(
            feats_clean.shape[1], cfg.n_hidden, gate_threshold=cfg.gate_threshold,
            seed=cfg.seed,
        )
        x_clean = model.condition(normalizer.transform(feats_clean))
        x_test = model.condition(
            normalizer.transform(extractor.transform([windows[i] for i in test_idx]))
        )
        buffer = ReplayBuffer(cfg.replay_capacity)
        metrics: list[MetricsRow] = []

        pool_x, pool_y = x_clean, y_train
        global_epoch = 0
        for stage in cfg.build_stages():
            if stage.attack is not None:
                attacked = [
                    attacks.apply(w, stage.attack.with_seed(
                        _derive_int(cfg.seed, stage.index, w.window_id)))
                    for w in train_windows
                ]
                x_attacked = model.condition(
                    normalizer.transform(extractor.transform(attacked))
                )
                pool_x = np.vstack([pool_x, x_attacked])
                pool_y = np.concatenate([pool_y, y_train])

            lam_stage = 0.0
            if cfg.use_ohem and stage.attack is not None:
                lam_stage = adaptive_lambda(
                    stage.attack.difficulty, cfg.max_difficulty, cfg.lambda_beta
                )

            for epoch in range(stage.epochs):
                eps = epsilon_schedule(global_epoch, cfg.total_epochs,
                                       cfg.eps_start, cfg.eps_end)
                mean_loss = self._run_epoch(
                    model, pool_x, pool_y, buffer, stage, lam_stage, eps, global_epoch
                )
                clean_acc = self._accuracy(model, x_test, y_test, cfg.flat)
                adv_acc = self._adversarial_accuracy(model, x_test, y_test, eps, cfg)
                metrics.append(MetricsRow(stage.name, global_epoch, eps, clean_acc,
                                          adv_acc, len(buffer), mean_loss))
                global_epoch += 1

        return TrainResult(model, extractor, normalizer, cfg, metrics,
                           train_idx, test_idx, buffer)

    def _run_epoch(self, model: HierarchicalModel, pool_x: np.ndarray,
                   pool_y: np.ndarray, buffer: ReplayBuffer, stage: CurriculumStage,
                   lam: float, eps: float, global_epoch: int) -> float:
        cfg = self.config
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence((cfg.seed, 0xE70C, global_epoch))))
        adversarial = stage.attack is not None
        n_replay = int(round(cfg.replay_frac * cfg.batch_size)) if adversarial else 0
        fresh_per_batch = max(cfg.batch_size - n_replay, 1)

        order = rng.permutation(pool_x.shape[0])
        losses = []
        for lo in range(0, order.size, fresh_per_batch):
            idx = order[lo : lo + fresh_per_batch]
            xb, yb = pool_x[idx], pool_y[idx]
            if n_replay and len(buffer):
                xr, yr = buffer.sample(n_replay, rng)
            else:
                xr = np.empty((0, xb.shape[1]))
                yr = np.empty(0, dtype=int)
            losses.append(self._train_batch(model, xb, yb, xr, yr, buffer,
                                            stage, lam, eps, adversarial))
        return float(np.mean(losses)) if losses else float("nan")

    def _train_batch(self, model: HierarchicalModel, xb, yb, xr, yr,
                     buffer: ReplayBuffer, stage: CurriculumStage, lam: float,
                     eps: float, adversarial: bool) -> float:
        cfg = self.config
        step = cfg.step_size(eps)

        def train_net(net: DenseNet, x_fresh, y_net_fresh, x_rep, y_net_rep):
            if adversarial and x_fresh.shape[0]:
                x_adv = pgd_attack(net, x_fresh, y_net_fresh, eps, cfg.pgd_steps, step)
                parts_x = [x_fresh, x_adv]
                parts_y = [y_net_fresh, y_net_fresh]
            else:
                x_adv = None
                parts_x, parts_y = [x_fresh], [y_net_fresh]
            if x_rep.shape[0]:
                parts_x.append(x_rep)
                parts_y.append(y_net_rep)
            x_all = np.vstack(parts_x)
            y_all = np.concatenate(parts_y)
            if not x_all.shape[0]:
                return 0.0, None, None
            if lam > 0.0:
                per = net.per_sample_losses(x_all, y_all)
                hard = ohem_select(per, cfg.ohem_frac)
            else:
                hard = np.empty(0, dtype=int)
            loss, grads = total_loss(net, x_all, y_all, hard, lam)
            net.apply_grads(grads, cfg.learn_rate, cfg.momentum)
            return loss, x_adv, y_net_fresh

        # Flat 25-class fallback always trains; its adversarial losses also
        # decide which examples are worth remembering.
        fb_loss, fb_adv, _ = train_net(model.fallback, xb, yb, xr, yr)
        if adversarial and fb_adv is not None and fb_adv.shape[0]:
            adv_losses = model.fallback.per_sample_losses(fb_adv, yb)
            k = max(1, math.ceil(cfg.buffer_insert_frac * fb_adv.shape[0]))
            top = np.argsort(-adv_losses, kind="stable")[:k]
            for i in top:
                buffer.insert(fb_adv[i], yb[i], adv_losses[i], stage.index)

        if not cfg.flat:
            y1b = np.array([model.stage1_label(c) for c in yb], dtype=int)
            y1r = np.array([model.stage1_label(c) for c in yr], dtype=int)
            train_net(model.stage1, xb, y1b, xr, y1r)
            for inv in range(1, model.n_inverters + 1):
                mb = y1b == inv
                mr = y1r == inv
                if not (mb.any() or mr.any()):
                    continue
                swb = np.array([decode_label(c, model.n_switches)[1] - 1
                                for c in yb[mb]], dtype=int)
                swr = np.array([decode_label(c, model.n_switches)[1] - 1
                                for c in yr[mr]], dtype=int)
                train_net(model.stage2[inv], xb[mb], swb, xr[mr], swr)
        return fb_loss

    @staticmethod
    def _accuracy(model: HierarchicalModel, x: np.ndarray, y: np.ndarray,
                  flat: bool) -> float:
        if x.shape[0] == 0:
            return float("nan")
        pred = model.predict_flat(x) if flat else model.predict(x)
        return float(np.mean(pred.class_ids == y))

    def _adversarial_accuracy(self, model: HierarchicalModel, x: np.ndarray,
                              y: np.ndarray, eps: float, cfg: TrainConfig) -> float:
        if x.shape[0] == 0:
            return float("nan")
        x_adv = pgd_attack(model.fallback, x, y, eps, cfg.pgd_steps, cfg.step_size(eps))
        return self._accuracy(model, x_adv, y, cfg.flat)


def _derive_int(*parts: int) -> int:
    """Stable 63-bit seed from integer parts, independent of call order."""
    seq = np.random.SeedSequence(tuple(int(p) for p in parts))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def train_curriculum(windows: list[Waveform], config: TrainConfig) -> TrainResult:
    """Functional entry point over :class:`CurriculumTrainer`."""
    return CurriculumTrainer(config).fit(windows)
