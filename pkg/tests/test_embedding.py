import numpy as np
import pytest

from geosketch import embed_point, hamming_distance, sample_embedding


def test_embed_deterministic_and_equal_inputs():
    fam = sample_embedding(6, 128, p=1.5, R=10.0, seed=3)
    x = np.array([0.5, 1.0, -2.0, 0.0, 3.0, 1.5])
    assert embed_point(fam, x) == embed_point(fam, x)
    assert embed_point(fam, x.copy()) == embed_point(fam, x)


def test_embed_rejects_bad_shapes():
    fam = sample_embedding(4, 16, p=2.0, R=4.0, seed=1)
    with pytest.raises(ValueError):
        embed_point(fam, np.zeros(5))
    with pytest.raises(ValueError):
        sample_embedding(4, 16, p=0.5, R=4.0, seed=1)
    with pytest.raises(ValueError):
        sample_embedding(4, 16, p=1.0, R=0.0, seed=1)


def _distortion(fam, pts, dists):
    emb = [embed_point(fam, p) for p in pts]
    ratios = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            h = hamming_distance(emb[i], emb[j])
            if h == 0:
                return np.inf
            ratios.append(h / dists[i][j])
    return max(ratios) / min(ratios)


def test_l1_distortion_monte_carlo():
    """16 random l1 points, >= 100 sampled families: distortion <= 4 with
    probability >= 0.9 (exact l1 distances as the oracle)."""
    rng = np.random.default_rng(0)
    pts = []
    while len(pts) < 16:
        cand = rng.integers(0, 4, size=4).astype(float)
        if not any(np.array_equal(cand, p) for p in pts):
            pts.append(cand)
    dists = [[np.abs(a - b).sum() for b in pts] for a in pts]
    R = 2.0 * max(np.abs(a - b).max() for a in pts for b in pts)  # l-inf scale
    good = 0
    fams = 120
    for s in range(fams):
        fam = sample_embedding(4, 4096, p=1.0, R=R, seed=s)
        if _distortion(fam, pts, dists) <= 4.0:
            good += 1
    assert good >= 0.9 * fams, good


def test_expected_bit_fraction_scales_with_distance():
    """The differing-bit fraction grows proportionally with ||x-y||_p within
    a factor-4 window (Monte Carlo over families)."""
    for p in (1.5, 2.0):
        x = np.zeros(6)
        y1 = np.zeros(6)
        y1[0] = 0.5
        y2 = np.zeros(6)
        y2[:4] = 1.0
        d1 = np.sum(np.abs(x - y1) ** p) ** (1 / p)
        d2 = np.sum(np.abs(x - y2) ** p) ** (1 / p)
        R = 8.0 * max(d1, d2)  # t_p = 8 scale regime
        f1 = f2 = 0
        fams = 150
        m = 512
        for s in range(fams):
            fam = sample_embedding(6, m, p=p, R=R, seed=1000 + s)
            ex = embed_point(fam, x)
            f1 += hamming_distance(ex, embed_point(fam, y1))
            f2 += hamming_distance(ex, embed_point(fam, y2))
        rate1 = f1 / (fams * m)
        rate2 = f2 / (fams * m)
        # proportionality: rate ratio tracks the distance ratio within 4x
        assert rate2 / rate1 <= 4.0 * (d2 / d1)
        assert rate2 / rate1 >= (d2 / d1) / 4.0
        # and the absolute scale is Theta(dist / R): within 4x of dist/R
        for rate, dd in ((rate1, d1), (rate2, d2)):
            assert dd / R / 4.0 <= rate <= 4.0 * dd / R, (p, rate, dd / R)
