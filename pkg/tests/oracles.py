"""Slow, obviously-correct reference implementations used only by tests."""

from fractions import Fraction
from math import sqrt


def auroc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    won = Fraction(0)
    for p in pos:
        for n in neg:
            won += 1 if p > n else Fraction(1, 2) if p == n else 0
    return won / (len(pos) * len(neg))


def auprc_walk(scores, labels):
    """Threshold at every distinct score, from high to low, and sum dR * P."""
    n_pos = sum(1 for y in labels if y)
    total, prev_recall = Fraction(0), Fraction(0)
    for t in sorted(set(scores), reverse=True):
        picked = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(1 for y in picked if y)
        recall = Fraction(tp, n_pos)
        total += (recall - prev_recall) * Fraction(tp, len(picked))
        prev_recall = recall
    return total


def mcc_counts(decisions, labels):
    tp = tn = fp = fn = 0
    for d, y in zip(decisions, labels):
        if d and y:
            tp += 1
        elif d:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return 0.0 if den == 0 else (tp * tn - fp * fn) / sqrt(den)


def samplewise_sets(decisions, targets):
    """Row-by-row set comparison with the declared empty-set conventions."""
    acc = prec = rec = f1 = Fraction(0)
    for d_row, t_row in zip(decisions, targets):
        P = {j for j, v in enumerate(d_row) if v}
        T = {j for j, v in enumerate(t_row) if v}
        p = Fraction(len(P & T), len(P)) if P else Fraction(1 if not T else 0)
        r = Fraction(len(P & T), len(T)) if T else Fraction(1)
        acc += Fraction(sum(1 for a, b in zip(d_row, t_row) if bool(a) == bool(b)), len(t_row))
        prec += p
        rec += r
        f1 += 2 * p * r / (p + r) if p + r else 0
    n = len(targets)
    return {"accuracy": acc / n, "precision": prec / n, "recall": rec / n, "f_score": f1 / n}
