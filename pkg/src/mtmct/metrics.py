"""Identity measures (IDP / IDR / IDF1) and CLEAR-MOT style single-camera measures."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import BoundingBox, InputError, iou

MOSTLY_TRACKED = 0.8


class Detection(NamedTuple):
    identity: int
    camera: int
    frame: int
    box: BoundingBox


@dataclass(frozen=True)
class IdReport:
    idtp: int
    idfp: int
    idfn: int

    def _ratio(self, num, den) -> float:
        if den:
            return num / den
        # nothing on either side is a vacuous perfect score
        return 1.0 if self.idtp + self.idfp + self.idfn == 0 else 0.0

    @property
    def idp(self) -> float:
        return self._ratio(self.idtp, self.idtp + self.idfp)

    @property
    def idr(self) -> float:
        return self._ratio(self.idtp, self.idtp + self.idfn)

    @property
    def idf1(self) -> float:
        return self._ratio(2 * self.idtp, 2 * self.idtp + self.idfp + self.idfn)


@dataclass(frozen=True)
class ClearReport:
    mota: float
    motp: float
    recall: float
    mt: int
    tp: int
    fp: int
    fn: int
    idsw: int
    n_gt: int


@dataclass
class MatchTable:
    """Per-identity lengths and co-matched frame counts for a GT/prediction pair."""

    gt_ids: list
    pred_ids: list
    gt_len: np.ndarray
    pred_len: np.ndarray
    matches: np.ndarray  # [gt, pred] -> frames with IOU >= threshold


def _index(dets: Iterable[Detection]):
    by_key = defaultdict(list)
    seen = set()
    for d in dets:
        k = (d.identity, d.camera, d.frame)
        if k in seen:
            raise InputError(f"identity {d.identity} has two boxes in camera {d.camera} frame {d.frame}")
        seen.add(k)
        by_key[(d.camera, d.frame)].append(d)
    return by_key


def match_table(gt: Sequence[Detection], pred: Sequence[Detection], threshold: float = 0.5) -> MatchTable:
    if not 0 < threshold <= 1:
        raise InputError("IOU threshold must lie in (0, 1]")
    gt_ids = sorted({d.identity for d in gt})
    pred_ids = sorted({d.identity for d in pred})
    gi = {g: k for k, g in enumerate(gt_ids)}
    pi = {p: k for k, p in enumerate(pred_ids)}
    gt_len = np.zeros(len(gt_ids), dtype=np.int64)
    pred_len = np.zeros(len(pred_ids), dtype=np.int64)
    for d in gt:
        gt_len[gi[d.identity]] += 1
    for d in pred:
        pred_len[pi[d.identity]] += 1
    matches = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    g_idx = _index(gt)
    p_idx = _index(pred)
    for key, gs in g_idx.items():
        ps = p_idx.get(key)
        if not ps:
            continue
        for g in gs:
            for p in ps:
                if iou(g.box, p.box) >= threshold:
                    matches[gi[g.identity], pi[p.identity]] += 1
    return MatchTable(gt_ids, pred_ids, gt_len, pred_len, matches)


def identity_assignment(table: MatchTable) -> list[tuple[int, int]]:
    """Optimal one-to-one GT/prediction identity matching minimising IDFN + IDFP.

    Solved as a square assignment over identities augmented with one
    "unmatched" slot per identity on the other side.
    """
    ng, npred = len(table.gt_ids), len(table.pred_ids)
    if ng == 0 or npred == 0:
        return []
    big = float(table.gt_len.sum() + table.pred_len.sum() + 1)
    n = ng + npred
    cost = np.zeros((n, n))
    # matched pair: unmatched frames on both sides
    cost[:ng, :npred] = (table.gt_len[:, None] - table.matches) + (table.pred_len[None, :] - table.matches)
    cost[:ng, npred:] = big
    cost[ng:, :npred] = big
    cost[np.arange(ng), npred + np.arange(ng)] = table.gt_len
    cost[ng + np.arange(npred), np.arange(npred)] = table.pred_len
    rows, cols = linear_sum_assignment(cost)
    return [(r, c) for r, c in zip(rows, cols) if r < ng and c < npred]


def id_measures_from_table(table: MatchTable) -> IdReport:
    pairs = identity_assignment(table)
    idtp_gt_side = int(sum(table.matches[r, c] for r, c in pairs))
    idfn = int(table.gt_len.sum()) - idtp_gt_side
    idfp = int(table.pred_len.sum()) - idtp_gt_side
    return IdReport(idtp=idtp_gt_side, idfp=idfp, idfn=idfn)


def id_measures(gt: Sequence[Detection], pred: Sequence[Detection], threshold: float = 0.5) -> IdReport:
    """IDTP/IDFP/IDFN under the best global identity matching.

    Boxes only match within the same (camera, frame). Empty ground truth and
    empty prediction give a vacuous perfect score.
    """
    return id_measures_from_table(match_table(gt, pred, threshold))


def clear_mot(gt: Sequence[Detection], pred: Sequence[Detection], threshold: float = 0.5) -> ClearReport:
    """MOTA, MOTP, recall and mostly-tracked count.

    Per (camera, frame), correspondences from the previous match of each GT
    identity are kept while their IOU stays above threshold; the rest are
    matched by a maximum-IOU assignment. A GT identity whose matched
    prediction changes counts as an identity switch.
    """
    g_idx = _index(gt)
    p_idx = _index(pred)
    keys = sorted(set(g_idx) | set(p_idx), key=lambda k: (k[1], k[0]))
    last_match: dict[int, int] = {}
    tp = fp = fn = idsw = 0
    iou_sum = 0.0
    gt_len = defaultdict(int)
    gt_hit = defaultdict(int)
    for key in keys:
        gs = sorted(g_idx.get(key, []), key=lambda d: d.identity)
        ps = sorted(p_idx.get(key, []), key=lambda d: d.identity)
        for g in gs:
            gt_len[g.identity] += 1
        pairs = {}
        used_p = set()
        for gk, g in enumerate(gs):
            prev = last_match.get(g.identity)
            for pk, p in enumerate(ps):
                if p.identity == prev and pk not in used_p:
                    v = iou(g.box, p.box)
                    if v >= threshold:
                        pairs[gk] = (pk, v)
                        used_p.add(pk)
                    break
        free_g = [k for k in range(len(gs)) if k not in pairs]
        free_p = [k for k in range(len(ps)) if k not in used_p]
        if free_g and free_p:
            sim = np.array([[iou(gs[a].box, ps[b].box) for b in free_p] for a in free_g])
            cost = np.where(sim >= threshold, 1.0 - sim, 1e6)
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if sim[r, c] >= threshold:
                    pairs[free_g[r]] = (free_p[c], sim[r, c])
        for gk, (pk, v) in pairs.items():
            gid, pid = gs[gk].identity, ps[pk].identity
            if gid in last_match and last_match[gid] != pid:
                idsw += 1
            last_match[gid] = pid
            tp += 1
            iou_sum += v
            gt_hit[gid] += 1
        fn += len(gs) - len(pairs)
        fp += len(ps) - len(pairs)
    n_gt = sum(gt_len.values())
    if n_gt == 0 and not pred:
        return ClearReport(1.0, 1.0, 1.0, 0, 0, 0, 0, 0, 0)
    mota = 1.0 - (fn + fp + idsw) / n_gt if n_gt else -math.inf
    motp = iou_sum / tp if tp else 0.0
    recall = tp / n_gt if n_gt else 1.0
    mt = sum(1 for g, n in gt_len.items() if gt_hit[g] >= MOSTLY_TRACKED * n)
    return ClearReport(mota, motp, recall, mt, tp, fp, fn, idsw, n_gt)


def per_camera_identities(dets: Iterable[Detection]) -> list[Detection]:
    """Rescope identities to (camera, identity) for single-camera evaluation."""
    dets = list(dets)
    keys = sorted({(d.camera, d.identity) for d in dets})
    new_id = {k: n for n, k in enumerate(keys, start=1)}
    return [Detection(new_id[(d.camera, d.identity)], d.camera, d.frame, d.box) for d in dets]


def format_report(report: IdReport, clear: ClearReport | None = None) -> str:
    rows = [("IDF1", f"{report.idf1:.4f}"), ("IDP", f"{report.idp:.4f}"), ("IDR", f"{report.idr:.4f}"),
            ("IDTP", str(report.idtp)), ("IDFP", str(report.idfp)), ("IDFN", str(report.idfn))]
    if clear is not None:
        rows += [("MOTA", f"{clear.mota:.4f}"), ("MOTP", f"{clear.motp:.4f}"),
                 ("Recall", f"{clear.recall:.4f}"), ("MT", str(clear.mt)), ("IDSW", str(clear.idsw))]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def format_report_csv(report: IdReport, clear: ClearReport | None = None) -> str:
    head = ["idf1", "idp", "idr", "idtp", "idfp", "idfn"]
    vals = [repr(report.idf1), repr(report.idp), repr(report.idr), report.idtp, report.idfp, report.idfn]
    if clear is not None:
        head += ["mota", "motp", "recall", "mt", "idsw"]
        vals += [repr(clear.mota), repr(clear.motp), repr(clear.recall), clear.mt, clear.idsw]
    return ",".join(head) + "\n" + ",".join(str(v) for v in vals) + "\n"
