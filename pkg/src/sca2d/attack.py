"""Profiled key recovery: score accumulation, key rank, guessing-entropy
curves, the repeated-training evaluation protocol and a Gaussian template
classifier used to validate the pipeline independently of the CNN."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-40


def log_likelihood_table(posteriors, public, spec, key=None, floor=PROB_FLOOR, prior=None):
    """Per-trace log score of every key candidate, shape ``(n, 256)``.

    ``prior`` (length-256 label distribution) switches on the Bayes
    denominator; by default labels are assumed uniform and it is dropped.
    """
    p = np.asarray(posteriors, dtype=np.float64)
    hyp = spec.hypotheses(public, key)
    if p.ndim != 2 or p.shape[0] != hyp.shape[0]:
        raise ValueError(f"{p.shape[0] if p.ndim == 2 else '?'} posterior rows for "
                         f"{hyp.shape[0]} public-data records")
    picked = np.take_along_axis(p, hyp.astype(np.int64), axis=1)
    ll = np.log(np.maximum(picked, floor))
    if prior is not None:
        ll -= np.log(np.maximum(np.asarray(prior, dtype=np.float64)[hyp], floor))
    return ll


def accumulate_scores(posteriors, public, spec, key=None, floor=PROB_FLOOR, prior=None):
    """Score vector ``d`` with ``d[k] = sum_i log Pr[y_i = g(p_i, k) | x_i]``."""
    return log_likelihood_table(posteriors, public, spec, key, floor, prior).sum(axis=0)


def key_rank(scores, k_true):
    """Pessimistic 1-based rank: ties with the true key count against it."""
    d = np.asarray(scores, dtype=np.float64)
    s = d[..., k_true]
    ahead = np.sum(d > s[..., None], axis=-1)
    ties = np.sum(d == s[..., None], axis=-1) - 1
    return ahead + ties + 1


def kge_curve(posteriors, public, k_true, spec, key=None, step=1, prior=None):
    """Rank of ``k_true`` after each prefix of ``step``, ``2*step``, ...
    traces. Returns ``(trace_counts, ranks)``."""
    ll = log_likelihood_table(posteriors, public, spec, key, prior=prior)
    counts = np.arange(step, ll.shape[0] + 1, step)
    cum = np.cumsum(ll, axis=0)[counts - 1]
    return counts, key_rank(cum, k_true).astype(np.int64)


@dataclass
class EvaluationResult:
    trace_counts: np.ndarray
    curves: np.ndarray  # (runs, attacks, points)
    seeds: list

    @property
    def flat(self):
        return self.curves.reshape(-1, self.curves.shape[-1])

    @property
    def mean(self):
        return self.flat.mean(axis=0)

    @property
    def rank_min(self):
        return self.flat.min(axis=0)

    @property
    def rank_max(self):
        return self.flat.max(axis=0)

    def mean_rank_at(self, n_traces):
        i = np.searchsorted(self.trace_counts, n_traces)
        return float(self.mean[min(i, len(self.mean) - 1)])

    def traces_to_rank(self, threshold):
        """Smallest trace count from which the mean rank stays <= threshold,
        or None."""
        ok = self.mean <= threshold
        if not ok[-1]:
            return None
        bad = np.nonzero(~ok)[0]
        start = 0 if bad.size == 0 else bad[-1] + 1
        return int(self.trace_counts[start])

    def to_csv(self):
        buf = io.StringIO()
        buf.write("traces,rank_mean,rank_min,rank_max\n")
        for n, m, lo, hi in zip(self.trace_counts, self.mean, self.rank_min, self.rank_max):
            buf.write(f"{int(n)},{m:.6f},{int(lo)},{int(hi)}\n")
        return buf.getvalue()


def average_curves(curves):
    return np.mean(np.asarray(curves, dtype=np.float64), axis=0)


def evaluate(fit, attack_inputs, public, k_true, spec, key=None, runs=10, attacks_per_run=5,
             attack_size=2000, step=1, seed=0, replace=False):
    """Repeated-training evaluation.

    ``fit(run_seed)`` trains a fresh model and returns a callable mapping
    attack inputs to posteriors. Each run then mounts ``attacks_per_run``
    attacks on ``attack_size`` traces drawn from ``attack_inputs``
    (disjoint unless ``replace``). The per-run seed is ``seed + run``.
    """
    n = len(attack_inputs)
    public = np.asarray(public)
    if key is not None:
        key = np.asarray(key)
    if not replace and attack_size * attacks_per_run > n:
        raise ValueError(f"{attacks_per_run} attacks of {attack_size} traces need "
                         f"{attack_size * attacks_per_run} attack traces, have {n}")
    curves, seeds, counts = [], [], None
    for run in range(runs):
        run_seed = seed + run
        seeds.append(run_seed)
        predict = fit(run_seed)
        post = np.asarray(predict(attack_inputs))
        rng = np.random.default_rng([seed, run, 7])
        if replace:
            picks = [rng.choice(n, attack_size, replace=True) for _ in range(attacks_per_run)]
        else:
            perm = rng.permutation(n)
            picks = [perm[a * attack_size:(a + 1) * attack_size] for a in range(attacks_per_run)]
        run_curves = []
        for idx in picks:
            k = key[idx] if key is not None and key.ndim == 2 else key
            counts, ranks = kge_curve(post[idx], public[idx], k_true, spec, k, step)
            run_curves.append(ranks)
        curves.append(run_curves)
    return EvaluationResult(counts, np.asarray(curves, dtype=np.int64), seeds)


@dataclass(frozen=True)
class TemplateModel:
    classes: np.ndarray
    means: np.ndarray  # (n_classes, D)
    precision: np.ndarray  # inverse pooled covariance (D, D)
    n_classes: int = 256


def template_fit(features, labels, ridge=1e-6, diagonal=False, n_classes=256):
    """Gaussian templates with a pooled covariance.

    ``ridge`` is added to the diagonal (scaled by the mean variance).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be (n, D) with one label per row")
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < 2):
        raise ValueError("every observed class needs at least 2 examples")
    means = np.stack([x[y == c].mean(axis=0) for c in classes])
    resid = x - means[np.searchsorted(classes, y)]
    cov = resid.T @ resid / (len(x) - len(classes))
    if diagonal:
        cov = np.diag(np.diag(cov))
    scale = max(float(np.mean(np.diag(cov))), 1e-300)
    cov = cov + ridge * scale * np.eye(cov.shape[0])
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular covariance after ridge") from exc
    inv_chol = np.linalg.inv(chol)
    return TemplateModel(classes, means, inv_chol.T @ inv_chol, n_classes)


def template_score(model, x):
    """Posterior rows ``(n, n_classes)``; classes absent from profiling get 0."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    pm = model.means @ model.precision
    # -0.5 * Mahalanobis distance, dropping the per-row constant x^T P x
    ll = x @ pm.T - 0.5 * np.einsum("cd,cd->c", pm, model.means)
    ll -= ll.max(axis=1, keepdims=True)
    e = np.exp(ll)
    post = np.zeros((len(x), model.n_classes))
    post[:, model.classes] = e / e.sum(axis=1, keepdims=True)
    return post
