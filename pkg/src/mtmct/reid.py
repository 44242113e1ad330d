"""Appearance feature aggregation and the re-identification training losses.

No network is trained here. Attention scores and embeddings arrive as data;
the losses are exposed as plain numeric functions returning analytic
gradients with respect to their inputs (distances, probabilities).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import InputError, Tracklet

log = logging.getLogger(__name__)

DEFAULT_CLIP_LENGTH = 4
XENT_EPS = 1e-12


@dataclass(frozen=True)
class ClipFeature:
    values: np.ndarray
    span: tuple[int, int]


@dataclass
class TripletBatch:
    """Per-anchor distances to its positives and negatives.

    `pos_weights` / `neg_weights` are optional explicit weightings; when left
    as None they are derived from the distances by the loss mode.
    """

    pos: list
    neg: list
    margin: float = 0.3
    pos_weights: Optional[list] = None
    neg_weights: Optional[list] = None


@dataclass
class LossResult:
    loss: float
    grad_pos: list
    grad_neg: list
    skipped: int = 0


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


def aggregate_clip(frames, att=None, normalize: str = "softmax",
                   span: Optional[tuple[int, int]] = None) -> ClipFeature:
    """Attention-weighted sum of frame features.

    normalize="softmax" turns the scores into a convex combination; "raw"
    uses the scores as given. Missing scores mean uniform weights, which is
    plain average pooling.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or len(frames) == 0:
        raise InputError("a clip needs at least one frame feature")
    if att is None:
        att = np.zeros(len(frames))
    att = np.asarray(att, dtype=np.float64).reshape(-1)
    if len(att) != len(frames):
        raise InputError(f"{len(att)} attention scores for {len(frames)} frames")
    if not np.all(np.isfinite(att)):
        raise InputError("attention scores must be finite")
    if normalize == "softmax":
        w = softmax(att)
    elif normalize == "raw":
        w = att
    else:
        raise InputError(f"unknown attention normalization {normalize!r}")
    if span is None:
        span = (0, len(frames) - 1)
    return ClipFeature(values=w @ frames, span=span)


def trajectory_feature(clips: Sequence[ClipFeature]) -> np.ndarray:
    if len(clips) == 0:
        raise InputError("trajectory feature needs at least one clip")
    return np.mean([c.values for c in clips], axis=0)


def chunk_clips(n: int, clip_length: int = DEFAULT_CLIP_LENGTH) -> list[slice]:
    """Consecutive index slices of length clip_length; the last may be short."""
    return [slice(i, min(i + clip_length, n)) for i in range(0, n, clip_length)]


def tracklet_feature(tracklet: Tracklet, clip_length: int = DEFAULT_CLIP_LENGTH,
                     normalize: bool = True, observations=None) -> Optional[np.ndarray]:
    """Uniform-attention clip features average-pooled over the tracklet.

    Returns None when any observation lacks an embedding.
    """
    obs = tracklet.observations if observations is None else observations
    if any(o.embedding is None for o in obs):
        return None
    emb = np.stack([o.embedding for o in obs])
    clips = [aggregate_clip(emb[s], span=(obs[s.start].frame, obs[s.stop - 1].frame))
             for s in chunk_clips(len(obs), clip_length)]
    f = trajectory_feature(clips)
    if normalize:
        n = np.linalg.norm(f)
        if n > 0:
            f = f / n
    return f


def _bs_weights(d, sign):
    return softmax(sign * np.asarray(d, dtype=np.float64))


def bs_triplet_loss(batch: TripletBatch, mode: str = "expectation",
                    seed: Optional[int] = None) -> LossResult:
    """Batch-sample triplet loss summed over anchors.

    expectation: positives weighted by softmax(D_ap), negatives by
    softmax(-D_an); gradients include the dependence of the weights on the
    distances. sampled: one positive and one negative drawn from the same
    distributions (seeded), weights treated as constants. Explicit weights on
    the batch override both and are treated as constants.
    """
    if mode not in ("expectation", "sampled"):
        raise InputError(f"unknown triplet mode {mode!r}")
    rng = np.random.default_rng(seed) if mode == "sampled" else None
    total = 0.0
    grad_pos, grad_neg = [], []
    skipped = 0
    m = float(batch.margin)
    for a, (dp, dn) in enumerate(zip(batch.pos, batch.neg)):
        dp = np.asarray(dp, dtype=np.float64)
        dn = np.asarray(dn, dtype=np.float64)
        if dp.size == 0 or dn.size == 0:
            skipped += 1
            grad_pos.append(np.zeros_like(dp))
            grad_neg.append(np.zeros_like(dn))
            continue
        if np.any(dp < 0) or np.any(dn < 0):
            raise InputError("distances must be non-negative")

        explicit = batch.pos_weights is not None and batch.neg_weights is not None
        if explicit:
            wp = np.asarray(batch.pos_weights[a], dtype=np.float64)
            wn = np.asarray(batch.neg_weights[a], dtype=np.float64)
        else:
            wp = _bs_weights(dp, +1.0)
            wn = _bs_weights(dn, -1.0)
            if mode == "sampled":
                wp = np.eye(dp.size)[rng.choice(dp.size, p=wp)]
                wn = np.eye(dn.size)[rng.choice(dn.size, p=wn)]

        ep = float(wp @ dp)
        en = float(wn @ dn)
        inner = m + ep - en
        if inner <= 0:
            grad_pos.append(np.zeros_like(dp))
            grad_neg.append(np.zeros_like(dn))
            continue
        total += inner
        if mode == "expectation" and not explicit:
            # d/dD_i of sum_j softmax(s*D)_j D_j = w_i * (1 + s * (D_i - E))
            grad_pos.append(wp * (1.0 + (dp - ep)))
            grad_neg.append(-wn * (1.0 - (dn - en)))
        else:
            grad_pos.append(wp.copy())
            grad_neg.append(-wn.copy())
    if skipped:
        log.warning("bs_triplet_loss skipped %d anchors without positives or negatives", skipped)
    return LossResult(loss=total, grad_pos=grad_pos, grad_neg=grad_neg, skipped=skipped)


def xent_loss(prob, truth, average: str = "classes") -> tuple[float, np.ndarray]:
    """-(1/N) * sum_i q(i) log prob(i), N = number of identities.

    average="sample" drops the 1/N factor (conventional per-probe loss).
    Returns (loss, d loss / d prob).
    """
    prob = np.asarray(prob, dtype=np.float64)
    q = np.asarray(truth, dtype=np.float64)
    if prob.shape != q.shape or prob.ndim != 1 or prob.size == 0:
        raise InputError("probabilities and truth must be equal-length vectors")
    if np.any(prob < 0) or np.any(prob > 1):
        raise InputError("probabilities must lie in [0, 1]")
    if average == "classes":
        scale = 1.0 / prob.size
    elif average == "sample":
        scale = 1.0
    else:
        raise InputError(f"unknown xent averaging {average!r}")
    p = prob
    if np.any((q > 0) & (prob < XENT_EPS)):
        log.warning("xent_loss: zero probability at a true class, clamped to %g", XENT_EPS)
        p = np.where(q > 0, np.maximum(prob, XENT_EPS), prob)
    safe = np.where(q > 0, p, 1.0)
    loss = -scale * float(np.sum(q * np.log(safe)))
    grad = np.where(q > 0, -scale * q / safe, 0.0)
    return loss, grad


def combined_loss(triplet: float, xent: float, lambda1: float = 1.0, lambda2: float = 1.0) -> float:
    if lambda1 < 0 or lambda2 < 0:
        raise InputError("loss weights must be non-negative")
    return lambda1 * triplet + lambda2 * xent
