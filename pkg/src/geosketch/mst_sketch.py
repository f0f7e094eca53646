"""One-pass MST estimator over the quadtree.

Per level i the estimate needs two quantities: the number of non-empty nodes
|L_i| (an l0 estimate), and the mean distance between a uniformly sampled
node's representative point and a representative of its parent, linearized
through random characters at rate alpha_i = 2^i / (d log^3 n):

    estimate = sum_i 1{l_i > 1.5} * l_i * (mu_i + d / 2^i).

Each of t independent samples per level recovers a tuple
(u*, v*, v**, r_v, r_v', chi(r_v), chi(r_v')): the parent u* maximizing
|C(u)|/t_u over exponentials t_u, two uniform children isolated by downward
subsample scans D_{kappa,j}, representative points isolated by point
subsamples P_eta with fingerprint witnesses, and the character values read
from chi-restricted copies of the witness structure. mu_i is the mismatch
frequency rescaled by d log^3 n / 2^i.

The recovery sketches are bucketed l_p sketches with p = 1/(4 log n): the
p-th powers of counts are ~1, so bucket masses act as t_u-weighted node
indicators. Their accumulators span e^{+-O(1/p)}, so all recovery arithmetic
runs in (sign, log-magnitude) space.

State per (level, sample): exact sparse counts per universe-reduced node and
per point identity, plus seeds; every sketch view is materialized from those
counts at decode time (bit-identical under permutation and merge).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import hashing as hx
from .hashing import U64
from .points import HypercubePoint, PointMultiset, hamming_matrix, points_to_matrix
from .quadtree import QuadtreeSpec, sample_quadtree
from .offline import LevelDecomposition
from .sketches import FAIL, L0Sketch, stable_median
from .emd_sketch import CharacterSet, UniverseMap, log2n

__all__ = [
    "MstSketchConfig",
    "MstSketch",
    "MstRepView",
    "reference_level_quantities",
]

_P61 = (1 << 61) - 1  # fingerprint field for witness triples


@dataclass
class MstSketchConfig:
    n: int
    d: int
    seed: int = 0
    samples: int = 0  # 0 -> ceil(log2 n)^3
    j_reps: int = 3  # subsample repetitions per kappa
    rec_rows: int = 5
    rec_buckets: int = 64
    # stable accumulators per bucket: the argmax decode needs to resolve
    # ratio gaps (noise ~ 2/(p sqrt(t0)) in log space vs gap ln(ratio)/p),
    # the child presence thresholds are far coarser
    rec_t0_parent: int = 48
    rec_t0_child: int = 12
    l0_buckets: int = 4096
    universe_m: int = 0  # 0 -> n^3

    def __post_init__(self):
        if self.samples == 0:
            self.samples = log2n(self.n) ** 3
        if self.universe_m == 0:
            self.universe_m = max(8, self.n**3)

    @property
    def L(self) -> int:
        return log2n(self.n)

    @property
    def gamma(self) -> float:
        return 1.0 / self.L**2

    @property
    def p(self) -> float:
        # p = eps / (2 log n) at eps = 1/2
        return 1.0 / (4.0 * self.L)

    @property
    def kappa_max(self) -> int:
        return self.L

    @property
    def eta_max(self) -> int:
        return self.L

    def alpha(self, i: int) -> float:
        return min(1.0, 2.0**i / (self.d * self.L**3))

    def mu_cap(self, i: int) -> float:
        return 10.0 * self.d * self.L / 2.0**i

    def to_json(self) -> str:
        return json.dumps({"kind": "mst-config", "version": 1, **asdict(self)})

    @classmethod
    def from_json(cls, s: str) -> "MstSketchConfig":
        obj = json.loads(s)
        if obj.pop("kind", None) != "mst-config" or obj.pop("version", None) != 1:
            raise ValueError("not a serialized MST sketch config")
        return cls(**obj)


# ---------------------------------------------------------------------------
# grouped signed accumulation in log space
# ---------------------------------------------------------------------------


def _grouped_log_abs_sum(
    flat_idx: np.ndarray, log_mag: np.ndarray, sign: np.ndarray, size: int
) -> np.ndarray:
    """log | sum of sign * exp(log_mag) | per group (scaled LSE)."""
    m = np.full(size, -np.inf)
    np.maximum.at(m, flat_idx, log_mag)
    mant = np.zeros(size)
    safe_m = m[flat_idx]
    safe_m = np.where(np.isneginf(safe_m), 0.0, safe_m)
    np.add.at(mant, flat_idx, sign * np.exp(log_mag - safe_m))
    with np.errstate(divide="ignore"):
        return m + np.log(np.abs(mant))


def _log_stable_draws(h_r: np.ndarray, h_t: np.ndarray, p: float):
    """(sign, log|x|) of standard p-stable draws from two hash-word arrays."""
    r = hx.uniform01(h_r)
    theta = np.pi * (hx.uniform01(h_t) - 0.5)
    at = np.abs(theta)
    log_mag = (
        np.log(np.abs(np.sin(p * at)))
        - np.log(np.cos(at)) / p
        + ((1.0 - p) / p) * (np.log(np.cos(at * (1.0 - p))) - np.log(np.log(1.0 / r)))
    )
    return np.sign(theta) + (theta == 0), log_mag


# ---------------------------------------------------------------------------
# per-(level, sample) state and decode view
# ---------------------------------------------------------------------------


class _RepState:
    """Sparse state of one (level, sample): node counts and point entries."""

    def __init__(self, cfg: MstSketchConfig, level: int, seed: int):
        self.cfg = cfg
        self.level = level
        self.seed = seed
        self.umap = UniverseMap(cfg.universe_m, int(hx.combine(seed, 0xD1)[()]))
        self.charset = CharacterSet(cfg.d, cfg.alpha(level), int(hx.combine(seed, 0xC4)[()]))
        # (u, w) -> [net count, net chi-plus count]
        self.nodes: Dict[Tuple[int, int], np.ndarray] = {}
        # (u, w, pt_fp) -> [net count, chi flag]
        self.points: Dict[Tuple[int, int, int], np.ndarray] = {}

    def point_fp(self, point: HypercubePoint) -> int:
        words = []
        v = point.value
        while True:
            words.append(v & 0xFFFFFFFFFFFFFFFF)
            v >>= 64
            if v == 0:
                break
        h = int(hx.combine(self.seed, 0xF9, *words)[()])
        return (h % (_P61 - 1)) + 1

    def update(self, key: Tuple[int, int], point: HypercubePoint, delta: int,
               pfp: Optional[int] = None) -> None:
        chi = 1 if self.charset.eval_value(point.value) == 1 else 0
        row = self.nodes.get(key)
        if row is None:
            row = np.zeros(2, dtype=np.int64)
            self.nodes[key] = row
        row[0] += delta
        row[1] += delta * chi
        if not row.any():
            del self.nodes[key]
        pk = (key[0], key[1], self.point_fp(point) if pfp is None else pfp)
        prow = self.points.get(pk)
        if prow is None:
            prow = np.array([0, chi], dtype=np.int64)
            self.points[pk] = prow
        prow[0] += delta
        if prow[0] == 0:
            del self.points[pk]

    def merge(self, other: "_RepState") -> None:
        for k, row in other.nodes.items():
            cur = self.nodes.get(k)
            if cur is None:
                self.nodes[k] = row.copy()
            else:
                cur += row
                if not cur.any():
                    del self.nodes[k]
        for k, prow in other.points.items():
            cur = self.points.get(k)
            if cur is None:
                self.points[k] = prow.copy()
            else:
                cur[0] += prow[0]
                if cur[0] == 0:
                    del self.points[k]


class MstRepView:
    """Decode view of one (level, sample): parent/child recovery, witness
    scans, and the sampled tuple."""

    def __init__(self, state: _RepState):
        self.st = state
        self.cfg = state.cfg
        keys = sorted(state.nodes.keys())
        self.keys = keys
        self.u = np.array([k[0] for k in keys], dtype=np.int64)
        self.w = np.array([k[1] for k in keys], dtype=np.int64)
        rows = (
            np.stack([state.nodes[k] for k in keys])
            if keys
            else np.zeros((0, 2), dtype=np.int64)
        )
        self.nx = rows[:, 0]
        self.uu, self.u_inv = (
            np.unique(self.u, return_inverse=True) if keys else (self.u, self.u)
        )
        self.hk_u = hx.combine(state.seed, 0xAB, self.uu.astype(U64))
        self.hk_v = hx.combine(state.seed, 0xAC, self.u.astype(U64), self.w.astype(U64))
        self.t_u = np.clip(hx.exp1(hx.combine(state.seed, 0xE1, self.hk_u)), 1e-6, 50.0)
        self.log_med = math.log(stable_median(self.cfg.p))

    # -- membership hashes ---------------------------------------------------
    def in_D(self, kappa: int, j: int, side: int) -> np.ndarray:
        u01 = hx.uniform01(hx.combine(self.st.seed, 0xDD, side, j, self.hk_v))
        return u01 < 2.0**-kappa

    # -- parent recovery -------------------------------------------------------
    def _lp_bucket_logs(self, bucket_of_node: np.ndarray, gamma_log: np.ndarray,
                        salt: int, t0: int) -> np.ndarray:
        """(t0, buckets) log|accumulator| for one hash row: each node
        contributes its stable draw times exp(gamma_log)."""
        cfg = self.cfg
        tgrid = np.arange(t0, dtype=U64)[:, None]
        h_r = hx.combine(self.st.seed, salt, 0x01, tgrid, self.hk_v[None, :])
        h_t = hx.combine(self.st.seed, salt, 0x02, tgrid, self.hk_v[None, :])
        sign, lmag = _log_stable_draws(h_r, h_t, cfg.p)
        lmag = lmag + gamma_log[None, :]
        flat = (np.arange(t0)[:, None] * cfg.rec_buckets + bucket_of_node[None, :]).ravel()
        out = _grouped_log_abs_sum(
            flat, lmag.ravel(), sign.ravel(), t0 * cfg.rec_buckets
        )
        return out.reshape(t0, cfg.rec_buckets)

    def _row_bucket(self, idx_hash: np.ndarray, row: int, salt: int) -> np.ndarray:
        return hx.bucket(hx.combine(self.st.seed, salt, 0xB0, row, idx_hash),
                         self.cfg.rec_buckets)

    def parent_recover(self) -> Optional[int]:
        """The non-empty parent maximizing |C(u)|/t_u, recovered from the
        bucketed l_p sketch (median over rows of per-bucket estimates)."""
        if len(self.keys) == 0:
            return None
        cfg = self.cfg
        mask = self.nx > 0
        gamma_log = np.where(mask, np.log(np.maximum(self.nx, 1)), -np.inf)
        gamma_log = gamma_log - np.log(self.t_u[self.u_inv]) / cfg.p
        ests = np.empty((cfg.rec_rows, len(self.uu)))
        for row in range(cfg.rec_rows):
            b_nodes = self._row_bucket(self.hk_u[self.u_inv], row, 0x9A)
            logs = self._lp_bucket_logs(b_nodes, gamma_log, salt=0x9A00 + row,
                                        t0=cfg.rec_t0_parent)
            b_cand = self._row_bucket(self.hk_u, row, 0x9A)
            ests[row] = np.median(logs, axis=0)[b_cand]
        med = np.median(ests, axis=0) - self.log_med
        return int(self.uu[int(np.argmax(med))])

    # -- child recovery ---------------------------------------------------------
    def child_recover(self, u_star: int, kappa: int, j: int, side: int = 0) -> List[Tuple[int, int]]:
        """Children of u_star whose bucket estimate clears the presence
        threshold 1/(3 t_{u*})^{1/p} in the D_{kappa,j}-filtered sketch;
        equals C(u*) cap D when 2^kappa >= |C(u*)|."""
        cfg = self.cfg
        cand = np.nonzero((self.u == u_star) & (self.nx > 0))[0]
        if len(cand) == 0:
            return []
        member = self.in_D(kappa, j, side)
        gamma_log = np.where(
            member & (self.nx > 0), np.log(np.maximum(self.nx, 1)), -np.inf
        )
        gamma_log = gamma_log - np.log(self.t_u[self.u_inv]) / cfg.p
        mins = np.full(len(cand), np.inf)
        for row in range(cfg.rec_rows):
            b_nodes = self._row_bucket(self.hk_v, row, 0x9B00 + side * 131 + kappa * 17 + j)
            logs = self._lp_bucket_logs(b_nodes, gamma_log, t0=cfg.rec_t0_child,
                                        salt=0x9B0000 + side * 131 + kappa * 17 + j + row * 7717)
            est = np.median(logs, axis=0)[b_nodes[cand]]
            mins = np.minimum(mins, est)
        mins = mins - self.log_med
        iu = int(np.nonzero(self.uu == u_star)[0][0])
        log_thr = -(math.log(3.0) + math.log(self.t_u[iu])) / cfg.p
        return [
            (int(self.u[cand[a]]), int(self.w[cand[a]]))
            for a in range(len(cand))
            if mins[a] >= log_thr
        ]

    def scan_children(self, u_star: int):
        """Downward kappa scan; the first kappa with unique hits in both a
        D and a D' repetition fixes (v*, v**)."""
        for kappa in range(self.cfg.kappa_max, -1, -1):
            v1 = v2 = None
            for j in range(self.cfg.j_reps):
                if v1 is None:
                    r = self.child_recover(u_star, kappa, j, side=0)
                    if len(r) == 1:
                        v1 = r[0]
                if v2 is None:
                    r = self.child_recover(u_star, kappa, j, side=1)
                    if len(r) == 1:
                        v2 = r[0]
            if v1 is not None and v2 is not None:
                return v1, v2
        return FAIL

    # -- representatives -----------------------------------------------------------
    def _point_arrays(self):
        """Cached per-point-entry arrays: fingerprints, nets, chi flags,
        subsample levels and per-(side, row) bucket assignments."""
        cached = getattr(self, "_pts", None)
        if cached is not None:
            return cached
        keys = sorted(self.st.points.keys())
        n = len(keys)
        pfp = np.array([k[2] for k in keys], dtype=U64)
        net = np.array([int(self.st.points[k][0]) for k in keys], dtype=np.int64)
        chi = np.array([int(self.st.points[k][1]) for k in keys], dtype=np.int64)
        hkv = hx.combine(
            self.st.seed, 0xAC,
            np.array([k[0] for k in keys], dtype=U64),
            np.array([k[1] for k in keys], dtype=U64),
        )
        lvl = np.stack(
            [hx.uniform01(hx.combine(self.st.seed, 0xBE, side, pfp)) for side in (0, 1)]
        ) if n else np.zeros((2, 0))
        bkt = np.stack(
            [
                np.stack(
                    [self._row_bucket(hkv, row, 0x9C00 + side)
                     for row in range(self.cfg.rec_rows)]
                )
                for side in (0, 1)
            ]
        ) if n else np.zeros((2, self.cfg.rec_rows, 0), dtype=np.int64)
        fp2 = (hx.combine(self.st.seed, 0xF2, pfp).astype(object) % (_P61 - 1)) + 1
        self._pts = (pfp, net, chi, lvl, bkt, fp2)
        return self._pts

    def _witness_buckets(self, v_key: Tuple[int, int], eta: int, side: int,
                         chi_restricted: bool) -> List[Tuple[int, int, int]]:
        """Per row, the (count, fpsum, fp2sum) triple of the bucket v_key
        hashes into, accumulated over member points (mod 2^61 - 1)."""
        cfg = self.cfg
        pfp, net, chi, lvl, bkt, fp2 = self._point_arrays()
        member = lvl[side] < 2.0**-eta
        if chi_restricted:
            member = member & (chi == 1)
        hv = hx.combine(self.st.seed, 0xAC, np.array([v_key[0]], dtype=U64),
                        np.array([v_key[1]], dtype=U64))
        out = []
        for row in range(cfg.rec_rows):
            bv = int(self._row_bucket(hv, row, 0x9C00 + side)[0])
            sel = np.nonzero(member & (bkt[side, row] == bv))[0]
            cnt = fs = fs2 = 0
            for a in sel:
                w = int(net[a])
                cnt += w
                fs = (fs + w * int(pfp[a])) % _P61
                fs2 = (fs2 + w * int(fp2[a])) % _P61
            out.append((cnt, fs, fs2))
        return out

    def _fp2(self, pfp: int) -> int:
        return (int(hx.combine(self.st.seed, 0xF2, pfp)[()]) % (_P61 - 1)) + 1

    @staticmethod
    def _validate(cnt: int, fs: int, fs2: int, fp2_of) -> Optional[int]:
        """The single-distinct-point test: fp2sum must equal cnt * fp2(fp)."""
        if cnt <= 0:
            return None
        inv = pow(cnt % _P61, _P61 - 2, _P61)
        fp = (fs * inv) % _P61
        if fp == 0:
            return None
        if (cnt * fp2_of(fp)) % _P61 != fs2 % _P61:
            return None
        return fp

    def child_representative(self, v_key: Tuple[int, int], side: int = 0):
        """Scan eta upward; the first level where the point subsample leaves a
        unique validated witness in X_v yields the representative token."""
        for eta in range(self.cfg.eta_max + 1):
            tok = self._witness_at(v_key, eta, side, chi_restricted=False)
            if tok is not None:
                return (tok, eta)
        return FAIL

    def _witness_at(self, v_key, eta: int, side: int, chi_restricted: bool) -> Optional[int]:
        fps = []
        for cnt, fs, fs2 in self._witness_buckets(v_key, eta, side, chi_restricted):
            fp = self._validate(cnt, fs, fs2, self._fp2)
            if fp is not None:
                fps.append(fp)
        if len(fps) >= 2 and len(set(fps)) == 1:
            return fps[0]
        return None

    def char_of_representative(self, v_key: Tuple[int, int], token, side: int = 0) -> int:
        """+1 iff the same witness reappears in the chi-restricted subsample."""
        fp, eta = token
        got = self._witness_at(v_key, eta, side, chi_restricted=True)
        return 1 if got == fp else -1

    # -- full tuple ------------------------------------------------------------
    def sample_tuple(self):
        """(u*, v*, v**, token_v, token_v', chi_v, chi_v') or FAIL."""
        u_star = self.parent_recover()
        if u_star is None:
            return FAIL
        pair = self.scan_children(u_star)
        if pair is FAIL:
            return FAIL
        v1, v2 = pair
        t1 = self.child_representative(v1, side=0)
        t2 = self.child_representative(v2, side=1)
        if t1 is FAIL or t2 is FAIL:
            return FAIL
        c1 = self.char_of_representative(v1, t1, side=0)
        c2 = self.char_of_representative(v2, t2, side=1)
        return {
            "u": u_star,
            "v": v1,
            "v2": v2,
            "r_v": t1[0],
            "r_v2": t2[0],
            "chi_v": c1,
            "chi_v2": c2,
        }


class MstSketch:
    """One-pass MST estimator (l0 per level plus t sampled tuples)."""

    def __init__(self, cfg: MstSketchConfig, tree: Optional[QuadtreeSpec] = None):
        self.cfg = cfg
        self.tree = tree if tree is not None else sample_quadtree(
            cfg.d, int(hx.combine(cfg.seed, 0x7EEE)[()])
        )
        if self.tree.d != cfg.d:
            raise ValueError("tree dimension does not match config")
        self.h = self.tree.h
        self.reps: List[List[_RepState]] = [
            [
                _RepState(cfg, i, int(hx.combine(cfg.seed, 0x33, i, s)[()]))
                for s in range(cfg.samples)
            ]
            for i in range(1, self.h + 1)
        ]
        self.l0: List[L0Sketch] = [
            L0Sketch(int(hx.combine(cfg.seed, 0x10, i)[()]), buckets=cfg.l0_buckets)
            for i in range(1, self.h + 1)
        ]
        self._fp_cache: Dict[int, tuple] = {}
        self.n_points = 0
        # batched hashing inputs: per level, the umap seeds of its samples
        self._umap_seeds = [
            np.array([rep.umap.seed for rep in per_level], dtype=U64)
            for per_level in self.reps
        ]
        self._rep_seeds = [
            np.array([rep.seed for rep in per_level], dtype=U64)
            for per_level in self.reps
        ]

    def _point_keys(self, point: HypercubePoint):
        """Per level: (u, w) keys for every sample replica, plus the replica
        point fingerprints (all derived by batched hashing, cached)."""
        cached = self._fp_cache.get(point.value)
        if cached is not None:
            return cached
        fp_path = self.tree.node_path(point.bits()[None, :])[0]
        words = []
        v = point.value
        while True:
            words.append(v & 0xFFFFFFFFFFFFFFFF)
            v >>= 64
            if v == 0:
                break
        per_level = []
        for li in range(self.h):
            level = li + 1
            seeds = self._umap_seeds[li]
            us = hx.bucket(
                hx.combine(seeds, UniverseMap._SALT_U,
                           fp_path[level - 1, 0], fp_path[level - 1, 1]),
                self.cfg.universe_m,
            )
            ws = hx.bucket(
                hx.combine(seeds, UniverseMap._SALT_W,
                           fp_path[level, 0], fp_path[level, 1]),
                self.cfg.universe_m,
            )
            pfps = (
                hx.combine(self._rep_seeds[li], 0xF9, *words).astype(object)
                % (_P61 - 1)
            ) + 1
            per_level.append((us, ws, pfps))
        self._fp_cache[point.value] = per_level
        return per_level

    def update(self, point: HypercubePoint, delta: int = 1) -> None:
        self.n_points += delta
        keys = self._point_keys(point)
        for li, per_level in enumerate(self.reps):
            us, ws, pfps = keys[li]
            self.l0[li].update((int(us[0]), int(ws[0])), delta)
            for r, rep in enumerate(per_level):
                rep.update((int(us[r]), int(ws[r])), point, delta,
                           pfp=int(pfps[r]))

    def merge(self, other: "MstSketch") -> None:
        if self.cfg != other.cfg:
            raise ValueError("cannot merge sketches with different configs")
        self.n_points += other.n_points
        for mine, theirs in zip(self.reps, other.reps):
            for a, b in zip(mine, theirs):
                a.merge(b)
        for a, b in zip(self.l0, other.l0):
            a.merge(b)

    def level_counts(self) -> List[float]:
        return [l0.estimate() for l0 in self.l0]

    def level_mu(self, i: int) -> float:
        """Mismatch-frequency estimate of the representative distance at
        level i; failed samples are dropped."""
        per_level = self.reps[i - 1]
        mismatches = 0
        successes = 0
        for rep in per_level:
            tup = MstRepView(rep).sample_tuple()
            if tup is FAIL:
                continue
            successes += 1
            if tup["chi_v"] != tup["chi_v2"]:
                mismatches += 1
        if successes == 0:
            raise RuntimeError(f"all samples failed at level {i}")
        mu = (mismatches / successes) / self.cfg.alpha(i)
        return min(mu, self.cfg.mu_cap(i))

    def estimate(self) -> float:
        if self.n_points <= 0:
            raise ValueError("stream encodes an empty point set")
        total = 0.0
        ells = self.level_counts()
        for i in range(1, self.h + 1):
            ell = ells[i - 1]
            if ell > 1.5:
                mu = self.level_mu(i)
                total += ell * (mu + self.cfg.d / 2.0**i)
        return total

    def state_bytes(self) -> bytes:
        out = [b"GMST"]
        for per_level in self.reps:
            for rep in per_level:
                for k in sorted(rep.nodes.keys()):
                    out.append(
                        k[0].to_bytes(16, "little")
                        + k[1].to_bytes(16, "little")
                        + rep.nodes[k].tobytes()
                    )
                for k in sorted(rep.points.keys()):
                    out.append(
                        k[0].to_bytes(16, "little")
                        + k[1].to_bytes(16, "little")
                        + k[2].to_bytes(16, "little")
                        + rep.points[k].tobytes()
                    )
        for l0 in self.l0:
            out.append(l0.state_bytes())
        return b"".join(out)


def reference_level_quantities(
    tree: QuadtreeSpec, X: PointMultiset, i: int
) -> Tuple[int, float]:
    """Exact (|L_i|, E_{v ~ L_i}[ ||r_v - c_{pi(v)}||_1 ]) where r_v is
    uniform over the distinct points of X_v and the parent representative is
    drawn by picking a uniform child v' of pi(v), then a uniform point of
    X_{v'} (test oracle; enumerated in closed form)."""
    if len(X) < 1:
        raise ValueError("X must be non-empty")
    if not 1 <= i <= tree.h:
        raise ValueError(f"level must be in [1, {tree.h}]")
    mx, _ = points_to_matrix(X)
    dec = LevelDecomposition(tree, mx, np.ones(mx.shape[0], dtype=np.int64),
                             np.zeros(mx.shape[0], dtype=np.int64))
    g = dec.node_count(i)
    if g == 0:
        return 0, 0.0
    rows_of = [np.nonzero(dec.group_of[i] == gi)[0] for gi in range(g)]
    children_of: Dict[int, List[int]] = {}
    for gi in range(g):
        children_of.setdefault(int(dec.parent[i][gi]), []).append(gi)
    total = 0.0
    for gi in range(g):
        sibs = children_of[int(dec.parent[i][gi])]
        inner = 0.0
        for gj in sibs:
            dmat = hamming_matrix(mx[rows_of[gi]], mx[rows_of[gj]])
            inner += float(dmat.mean())
        total += inner / len(sibs)
    return g, total / g
