"""Training: contrastive projection head, Platt calibration, logistic head.

The contrastive objective pulls same-author episode pairs together against
in-batch negatives (softmax over cosine similarities at a temperature).  All
gradients here are analytic and are held to central finite differences by
the test suite, so the optimizers stay plain (SGD / damped Newton) and fully
checkable.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import IO

import numpy as np

from .corpus import Episode
from .embedder import EmbeddingRecord, ProjectionHead, embed_episode
from .errors import StoreError, TrainError
from .rng import SplitMix64, derive_seed

COMPOSITION_NONE = "none"
COMPOSITION_HALF_HUMAN_HALF_MACHINE = "half-human-half-machine"
COMPOSITION_ALL_DOMAINS_PRESENT = "all-domains-present"


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.1
    batch_pairs: int = 8
    steps: int = 100
    learning_rate: float = 0.1
    seed: int = 0
    batch_composition: str = COMPOSITION_NONE

    def __post_init__(self):
        if self.temperature <= 0:
            raise TrainError("bad-temperature", "temperature must be positive")
        if self.batch_pairs < 2:
            raise TrainError("bad-batch", "need at least two pairs per batch")
        if self.batch_composition not in (
            COMPOSITION_NONE,
            COMPOSITION_HALF_HUMAN_HALF_MACHINE,
            COMPOSITION_ALL_DOMAINS_PRESENT,
        ):
            raise TrainError("bad-composition", f"unknown batch composition {self.batch_composition!r}")


@dataclass(frozen=True)
class PlattCalibrator:
    """Sigmoid calibration p = 1 / (1 + exp(a*s + b))."""

    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise TrainError("bad-calibrator", "calibrator coefficients must be finite")

    @property
    def increasing(self) -> bool:
        """True when calibrated probability increases with the raw score."""
        return self.a < 0


@dataclass(frozen=True)
class LogisticHead:
    w: np.ndarray
    b: float

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        z = np.asarray(x, dtype=np.float64) @ self.w + self.b
        return _sigmoid(z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _author_pool(episodes: list[Episode]) -> dict[str, list[Episode]]:
    """Authors eligible for positive pairing: >= 2 episodes, and when all of
    an author's episodes carry timestamps, >= 2 distinct composition times."""
    by_author: dict[str, list[Episode]] = {}
    for ep in episodes:
        by_author.setdefault(ep.author, []).append(ep)
    eligible = {}
    for author, eps in by_author.items():
        if len(eps) < 2:
            continue
        stamps = [e.timestamp() for e in eps]
        if all(s is not None for s in stamps) and len(set(stamps)) < 2:
            continue
        eligible[author] = eps
    return eligible


def _pick_pair(eps: list[Episode], rng: SplitMix64) -> tuple[Episode, Episode]:
    stamps = [e.timestamp() for e in eps]
    timed = all(s is not None for s in stamps)
    pairs = [
        (i, j)
        for i in range(len(eps))
        for j in range(len(eps))
        if i != j and (not timed or stamps[i] != stamps[j])
    ]
    i, j = pairs[rng.randbelow(len(pairs))]
    return eps[i], eps[j]


def sample_contrastive_batch(
    episodes: list[Episode], cfg: ContrastiveConfig, rng: SplitMix64
) -> list[tuple[Episode, Episode]]:
    """Sample (anchor, positive) episode pairs with distinct authors.

    Pairs share an author and, when timestamps are available, were composed
    at different times; authors within the batch are distinct so the other
    pairs act as negatives.  Composition constraints restrict the author
    draw: half human / half machine, or at least one author per domain.
    """
    pool = _author_pool(episodes)
    authors = sorted(pool)
    if cfg.batch_composition == COMPOSITION_NONE:
        if len(authors) < cfg.batch_pairs:
            raise TrainError(
                "insufficient-authors",
                f"need {cfg.batch_pairs} eligible authors, found {len(authors)}",
            )
        chosen = [authors[i] for i in rng.sample(len(authors), cfg.batch_pairs)]
    elif cfg.batch_composition == COMPOSITION_HALF_HUMAN_HALF_MACHINE:
        if cfg.batch_pairs % 2:
            raise TrainError("composition-unsatisfiable", "half/half needs an even batch size")
        humans = [a for a in authors if pool[a][0].source.kind == "human"]
        machines = [a for a in authors if pool[a][0].source.kind == "machine"]
        half = cfg.batch_pairs // 2
        if len(humans) < half or len(machines) < half:
            raise TrainError(
                "composition-unsatisfiable",
                f"half/half needs {half} human and {half} machine authors, "
                f"found {len(humans)} and {len(machines)}",
            )
        chosen = [humans[i] for i in rng.sample(len(humans), half)]
        chosen += [machines[i] for i in rng.sample(len(machines), half)]
    else:  # all domains present
        domains = sorted({ep.domain for ep in episodes})
        if cfg.batch_pairs < len(domains):
            raise TrainError(
                "composition-unsatisfiable",
                f"batch of {cfg.batch_pairs} cannot cover {len(domains)} domains",
            )
        remaining = list(authors)
        chosen = []
        for domain in domains:
            candidates = [a for a in remaining if any(e.domain == domain for e in pool[a])]
            if not candidates:
                raise TrainError("composition-unsatisfiable", f"no eligible author in domain {domain!r}")
            pick = candidates[rng.randbelow(len(candidates))]
            chosen.append(pick)
            remaining.remove(pick)
        extra = cfg.batch_pairs - len(chosen)
        if extra > len(remaining):
            raise TrainError("insufficient-authors", "not enough eligible authors for the batch")
        chosen += [remaining[i] for i in rng.sample(len(remaining), extra)]
    return [_pick_pair(pool[a], rng) for a in chosen]


def info_nce_loss(
    anchors: np.ndarray, positives: np.ndarray, temperature: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Contrastive loss over cosine similarities, with exact gradients.

    loss = mean_i -log softmax_j(cos(a_i, p_j) / tau) at j = i.  Returns the
    loss and gradients with respect to both input matrices (M x d).  The
    cosine is differentiated exactly, so the check against finite
    differences holds for arbitrary nonzero inputs, unit norm or not.
    """
    if temperature <= 0:
        raise TrainError("bad-temperature", "temperature must be positive")
    a = np.asarray(anchors, dtype=np.float64)
    p = np.asarray(positives, dtype=np.float64)
    if a.ndim != 2 or a.shape != p.shape:
        raise TrainError("bad-batch", "anchors and positives must be equal-shape matrices")
    m = a.shape[0]
    if m < 2:
        raise TrainError("bad-batch", "contrastive loss needs at least two pairs")
    na = np.linalg.norm(a, axis=1)
    npos = np.linalg.norm(p, axis=1)
    if np.any(na == 0) or np.any(npos == 0):
        raise TrainError("zero-vector", "contrastive inputs must be nonzero")
    a_hat = a / na[:, None]
    p_hat = p / npos[:, None]
    cos = a_hat @ p_hat.T
    s = cos / temperature
    s_max = s.max(axis=1, keepdims=True)
    lse = s_max[:, 0] + np.log(np.exp(s - s_max).sum(axis=1))
    loss = float(np.mean(lse - np.diag(s)))
    q = np.exp(s - lse[:, None])
    g_cos = (q - np.eye(m)) / (m * temperature)
    row = (g_cos * cos).sum(axis=1)
    col = (g_cos * cos).sum(axis=0)
    grad_a = (g_cos @ p_hat - row[:, None] * a_hat) / na[:, None]
    grad_p = (g_cos.T @ a_hat - col[:, None] * p_hat) / npos[:, None]
    return loss, grad_a, grad_p


def train_projection(
    episodes: list[Episode],
    embedder,
    cfg: ContrastiveConfig,
    d_out: int = 256,
    log_fh: IO[str] | None = None,
) -> tuple[ProjectionHead, list[float]]:
    """Fit a linear projection head with SGD on the contrastive loss.

    Deterministic for a fixed (data, config, seed); the per-step losses are
    returned and optionally written as line-delimited JSON {step, loss}.
    """
    base = {ep.id: embed_episode(ep, embedder).astype(np.float64) for ep in episodes}
    d_in = next(iter(base.values())).shape[0] if base else 0
    if d_in == 0:
        raise TrainError("empty-corpus", "no episodes to train on")
    if d_out > d_in:
        raise TrainError("bad-head", f"d_out {d_out} exceeds input dimension {d_in}")
    init_rng = np.random.default_rng(derive_seed(cfg.seed, "projection-init"))
    weights = init_rng.standard_normal((d_out, d_in)) / math.sqrt(d_in)
    rng = SplitMix64(derive_seed(cfg.seed, "projection-batches"))
    losses: list[float] = []
    for step in range(cfg.steps):
        batch = sample_contrastive_batch(episodes, cfg, rng)
        a = np.stack([base[anchor.id] for anchor, _ in batch])
        p = np.stack([base[positive.id] for _, positive in batch])
        loss, grad_a, grad_p = info_nce_loss(a @ weights.T, p @ weights.T, cfg.temperature)
        if not math.isfinite(loss):
            raise TrainError("divergence", f"non-finite loss at step {step}")
        grad_w = grad_a.T @ a + grad_p.T @ p
        weights = weights - cfg.learning_rate * grad_w
        losses.append(loss)
        if log_fh is not None:
            log_fh.write(json.dumps({"step": step, "loss": loss}) + "\n")
    return ProjectionHead(weights), losses


def fit_platt(scores: list[float], labels: list[int]) -> PlattCalibrator:
    """Fit sigmoid coefficients by damped Newton on the smoothed likelihood.

    Targets use the standard smoothing t+ = (N+ + 1)/(N+ + 2) and
    t- = 1/(N- + 2); iterations stop at gradient norm < 1e-10 or 100 steps.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise TrainError("bad-input", "scores and labels must be equal-length vectors")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise TrainError("single-class", "calibration needs both classes present")
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(a: float, b: float) -> tuple[float, np.ndarray, np.ndarray]:
        f = a * s + b
        p = _sigmoid(-f)
        # stable cross-entropy with targets t against p = sigmoid(-f)
        nll = float(np.sum(t * f + np.logaddexp(0.0, -f)))
        return nll, p, f

    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    if np.all(s == s[0]):
        # constant scores leave the slope unidentified; keep a = 0 so the
        # calibrated probability is the smoothed prior for every input
        mean_t = float(t.mean())
        return PlattCalibrator(a=0.0, b=math.log(1.0 / mean_t - 1.0))
    nll, p, _ = objective(a, b)
    ridge = 1e-12
    for _ in range(100):
        d = t - p  # dNLL/df
        g = np.array([np.sum(s * d), np.sum(d)])
        if np.max(np.abs(g)) < 1e-10:
            break
        w = p * (1.0 - p)
        h11 = np.sum(s * s * w) + ridge
        h12 = np.sum(s * w)
        h22 = np.sum(w) + ridge
        det = h11 * h22 - h12 * h12
        if det <= 0:
            break
        da = -(h22 * g[0] - h12 * g[1]) / det
        db = -(h11 * g[1] - h12 * g[0]) / det
        step_size = 1.0
        while step_size >= 1e-10:
            na_, nb_ = a + step_size * da, b + step_size * db
            new_nll, new_p, _ = objective(na_, nb_)
            if new_nll < nll + 1e-4 * step_size * (g[0] * da + g[1] * db):
                a, b, nll, p = na_, nb_, new_nll, new_p
                break
            step_size *= 0.5
        else:
            break
    return PlattCalibrator(a=a, b=b)


def apply_platt(cal: PlattCalibrator, score: float) -> float:
    """Calibrated probability 1 / (1 + exp(a*score + b))."""
    if not math.isfinite(score):
        raise TrainError("bad-score", "score must be finite")
    z = cal.a * score + cal.b
    if z >= 0:
        return float(math.exp(-z) / (1.0 + math.exp(-z)))
    return float(1.0 / (1.0 + math.exp(z)))


def logistic_loss_grad(
    w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, l2_penalty: float
) -> tuple[float, np.ndarray, float]:
    """Mean cross-entropy with L2 on the weights (bias unpenalized)."""
    z = x @ w + b
    p = _sigmoid(z)
    n = len(y)
    nll = float(np.mean(np.logaddexp(0.0, z) - y * z))
    loss = nll + 0.5 * l2_penalty * float(w @ w)
    resid = (p - y) / n
    grad_w = x.T @ resid + l2_penalty * w
    grad_b = float(resid.sum())
    return loss, grad_w, grad_b


def train_logistic_head(
    records: list[EmbeddingRecord],
    labels: list[int],
    l2_penalty: float = 1e-4,
    seed: int = 0,
    steps: int = 2000,
    learning_rate: float = 0.5,
) -> LogisticHead:
    """Gradient-descent logistic detector on frozen embeddings."""
    if len(records) != len(labels):
        raise TrainError("bad-input", "records and labels must align")
    y = np.asarray(labels, dtype=np.float64)
    if not ((y == 1).any() and (y == 0).any()):
        raise TrainError("single-class", "training needs both classes present")
    x = np.stack([r.vector.astype(np.float64) for r in records])
    init_rng = np.random.default_rng(derive_seed(seed, "logistic-init"))
    w = init_rng.normal(scale=1e-3, size=x.shape[1])
    b = 0.0
    for step in range(steps):
        loss, grad_w, grad_b = logistic_loss_grad(w, b, x, y, l2_penalty)
        if not math.isfinite(loss):
            raise TrainError("divergence", f"non-finite loss at step {step}")
        w = w - learning_rate * grad_w
        b = b - learning_rate * grad_b
    return LogisticHead(w=w, b=b)


_HEAD_MAGIC = b"HEAD"
_HEAD_VERSION = 1


def save_head(obj: ProjectionHead | LogisticHead | PlattCalibrator, path: str) -> None:
    """Serialize a trained head in the HEAD container (float64, little-endian)."""
    if isinstance(obj, ProjectionHead):
        kind, matrix, extra = "projection", obj.weights, np.zeros(0)
    elif isinstance(obj, LogisticHead):
        kind, matrix, extra = "logistic", obj.w.reshape(1, -1), np.array([obj.b])
    elif isinstance(obj, PlattCalibrator):
        kind, matrix, extra = "platt", np.zeros((0, 0)), np.array([obj.a, obj.b])
    else:
        raise StoreError("bad-head", f"cannot serialize {type(obj).__name__}")
    data = kind.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD_MAGIC)
        fh.write(struct.pack("<IH", _HEAD_VERSION, len(data)))
        fh.write(data)
        fh.write(struct.pack("<III", matrix.shape[0] if matrix.ndim == 2 else 0,
                             matrix.shape[1] if matrix.ndim == 2 else 0, len(extra)))
        fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(extra, dtype="<f8").tobytes())


def load_head(path: str) -> ProjectionHead | LogisticHead | PlattCalibrator:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _HEAD_MAGIC:
            raise StoreError("bad-magic", f"not a head file (magic {magic!r})")
        version, kind_len = struct.unpack("<IH", fh.read(6))
        if version != _HEAD_VERSION:
            raise StoreError("bad-version", f"unsupported head version {version}")
        kind = fh.read(kind_len).decode("utf-8")
        rows, cols, n_extra = struct.unpack("<III", fh.read(12))
        matrix = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
        extra = np.frombuffer(fh.read(8 * n_extra), dtype="<f8").copy()
        if fh.read(1):
            raise StoreError("trailing-bytes", "head file has trailing bytes")
    if kind == "projection":
        return ProjectionHead(matrix)
    if kind == "logistic":
        if rows != 1 or len(extra) != 1:
            raise StoreError("bad-head", "malformed logistic head")
        return LogisticHead(w=matrix[0], b=float(extra[0]))
    if kind == "platt":
        if len(extra) != 2:
            raise StoreError("bad-head", "malformed calibrator")
        return PlattCalibrator(a=float(extra[0]), b=float(extra[1]))
    raise StoreError("bad-head", f"unknown head kind {kind!r}")
