"""NSGA-II search for per-image embedding strengths (delta', delta'').

The generic machinery (dominance, fronts, crowding, the generational loop)
works on any bounded real decision space and any vector objective; the
watermark objectives are plugged in through :class:`WatermarkObjective`.
"""

from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attacks import apply_attack, optimization_attack_set
from .embed import DELTA_C_BOUNDS, DELTA_Q_BOUNDS, ThresholdPair, embed_all
from .extract import extract_auth, extract_tiled, fine_tune, pretrain_extractor
from .image import Image
from .marks import MarkSet
from .metrics import ber, mse
from .mlp import TrainConfig
from .texture import TextureMap

log = logging.getLogger(__name__)

BOUNDS = (DELTA_Q_BOUNDS, DELTA_C_BOUNDS)


class OptimizeError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    population: int = 50
    generations: int = 100
    crossover_rate: float = 0.7
    mutation_rate: float = 0.2
    tournament: int = 5
    cap: float = 0.1  # robustness budget T
    n_attacks: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.population < 2 or self.generations < 0:
            raise OptimizeError("population must be >= 2 and generations >= 0")
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise OptimizeError("operator rates must lie in [0, 1]")
        if not 1 <= self.tournament <= self.population:
            raise OptimizeError("tournament size must be in [1, population]")


@dataclass
class Individual:
    x: np.ndarray
    f: np.ndarray | None = None
    rank: int = 0
    crowding: float = 0.0

    def as_dict(self):
        return {"x": [float(v) for v in self.x], "f": [float(v) for v in self.f],
                "rank": self.rank, "crowding": _finite(self.crowding)}


def _finite(v):
    return None if not np.isfinite(v) else float(v)


# -- dominance, sorting, crowding ----------------------------------------------


def _obj(a):
    return np.asarray(a.f if isinstance(a, Individual) else a, dtype=np.float64)


def dominates(a, b) -> bool:
    """Minimization: a is no worse everywhere and strictly better somewhere."""
    fa, fb = _obj(a), _obj(b)
    if fa.shape != fb.shape:
        raise OptimizeError(f"objective dimension mismatch {fa.shape} vs {fb.shape}")
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def fast_nondominated_sort(pop) -> list:
    """Fronts as lists of indices into ``pop``; sets ``rank`` (1-based) on Individuals."""
    n = len(pop)
    if n == 0:
        raise OptimizeError("empty population")
    F = np.array([_obj(p) for p in pop])
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    fronts = []
    current = [i for i in range(n) if count[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                count[j] -= 1
                if count[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    for r, front in enumerate(fronts, 1):
        for i in front:
            if isinstance(pop[i], Individual):
                pop[i].rank = r
    return fronts


def crowding_distance(front) -> np.ndarray:
    """Per-objective normalized neighbour gaps, summed; boundaries are infinite."""
    F = np.array([_obj(p) for p in front])
    n = len(F)
    if n == 0:
        raise OptimizeError("empty front")
    d = np.zeros(n)
    if n <= 2:
        d[:] = np.inf
    else:
        for k in range(F.shape[1]):
            order = np.argsort(F[:, k], kind="stable")
            v = F[order, k]
            d[order[0]] = d[order[-1]] = np.inf
            span = v[-1] - v[0]
            if span > 0:
                d[order[1:-1]] += (v[2:] - v[:-2]) / span
    for p, c in zip(front, d):
        if isinstance(p, Individual):
            p.crowding = float(c)
    return d


# -- operators -------------------------------------------------------------------


def _lo_hi(bounds):
    b = np.asarray(bounds, dtype=np.float64)
    return b[:, 0], b[:, 1]


def tournament_select(pop, size, rng) -> Individual:
    idx = rng.choice(len(pop), size=size, replace=False)
    # lower rank wins, then larger crowding, then lower index
    best = min(idx, key=lambda i: (pop[i].rank, -pop[i].crowding, i))
    return pop[best]


def arithmetic_crossover(a, b, rng):
    lam = rng.random()
    return lam * a + (1 - lam) * b, (1 - lam) * a + lam * b


def uniform_mutation(x, rate, bounds, rng):
    lo, hi = _lo_hi(bounds)
    y = x.copy()
    hit = rng.random(len(y)) < rate
    y[hit] = rng.uniform(lo[hit], hi[hit])
    return y


def _rank_and_crowd(pop):
    fronts = fast_nondominated_sort(pop)
    for front in fronts:
        crowding_distance([pop[i] for i in front])
    return fronts


def _truncate(pop, size):
    fronts = _rank_and_crowd(pop)
    keep = []
    for front in fronts:
        if len(keep) == size:
            break
        if len(keep) + len(front) <= size:
            keep.extend(front)
            continue
        # drop the most crowded member one at a time, recomputing distances,
        # which spreads the survivors far more evenly than a single cut
        rest = list(front)
        while len(keep) + len(rest) > size:
            d = crowding_distance([pop[i] for i in rest])
            rest.pop(int(np.argmin(d)))
        crowding_distance([pop[i] for i in rest])
        keep.extend(rest)
        break
    return [pop[i] for i in keep]


def nondominated(individuals) -> list:
    """Non-dominated members of ``individuals``, one per distinct decision vector."""
    seen, uniq = set(), []
    for p in individuals:
        k = tuple(np.round(p.x, 12))
        if k not in seen:
            seen.add(k)
            uniq.append(p)
    # after a lexicographic sort nobody can be dominated by a later entry
    uniq.sort(key=lambda p: tuple(p.f))
    if not uniq:
        return []
    F = np.array([p.f for p in uniq], dtype=np.float64)
    kept = np.zeros(len(uniq), dtype=bool)
    kept_f = np.empty((0, F.shape[1]))
    for i, f in enumerate(F):
        if not np.any(np.all(kept_f <= f, axis=1) & np.any(kept_f < f, axis=1)):
            kept[i] = True
            kept_f = np.vstack([kept_f, f])
    return [p for p, k in zip(uniq, kept) if k]


@dataclass
class RunResult:
    front: list  # non-dominated Individuals over everything evaluated
    population: list
    trace: list  # one record per generation
    archive: list = field(default_factory=list)  # every evaluated Individual

    def write_trace(self, path):
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def nsga2(objective, bounds, config: OptimizerConfig | None = None, seed: int = 0,
          keep_archive: bool = True) -> RunResult:
    """Generic NSGA-II. ``objective`` maps an (n, d) array of decision vectors to (n, k) objectives."""
    cfg = config or OptimizerConfig()
    rng = np.random.default_rng(seed)
    lo, hi = _lo_hi(bounds)
    archive = []

    def evaluate(xs):
        xs = np.clip(np.asarray(xs, dtype=np.float64), lo, hi)
        fs = np.asarray(objective(xs), dtype=np.float64)
        if fs.ndim != 2 or len(fs) != len(xs) or not np.all(np.isfinite(fs)):
            raise OptimizeError("objective returned a malformed or non-finite array")
        out = [Individual(x.copy(), f.copy()) for x, f in zip(xs, fs)]
        if keep_archive:
            archive.extend(Individual(i.x, i.f) for i in out)
        return out

    pop = evaluate(rng.uniform(lo, hi, size=(cfg.population, len(lo))))
    _rank_and_crowd(pop)
    trace = []
    for gen in range(cfg.generations):
        children = []
        while len(children) < cfg.population:
            a = tournament_select(pop, cfg.tournament, rng).x
            b = tournament_select(pop, cfg.tournament, rng).x
            if rng.random() < cfg.crossover_rate:
                c1, c2 = arithmetic_crossover(a, b, rng)
            else:
                c1, c2 = a.copy(), b.copy()
            children.append(uniform_mutation(c1, cfg.mutation_rate, bounds, rng))
            children.append(uniform_mutation(c2, cfg.mutation_rate, bounds, rng))
        offspring = evaluate(np.array(children[: cfg.population]))
        pop = _truncate(pop + offspring, cfg.population)
        front = [p for p in pop if p.rank == 1]
        trace.append({"generation": gen + 1, "front": [p.as_dict() for p in front],
                      "best": [float(v) for v in np.min([p.f for p in pop], axis=0)]})
    _rank_and_crowd(pop)
    if keep_archive:
        # crowding truncation can discard a point that dominates a later
        # survivor, so the returned set is taken over every evaluation
        front = [Individual(p.x, p.f, 1) for p in nondominated(archive)]
        crowding_distance(front)
    else:
        front = [p for p in pop if p.rank == 1]
    return RunResult(front, pop, trace, archive)


def hausdorff(A, B) -> float:
    A, B = np.asarray(A, float), np.asarray(B, float)
    d = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# -- watermark objectives --------------------------------------------------------


def _key(x):
    return (round(float(x[0]), 2), round(float(x[1]), 2))


class WatermarkObjective:
    """f1 = mean copyright BER, f2 = mean auth BER over the attack set, f3 = MSE.

    Results are cached on (delta', delta'') rounded to two decimals. Each
    evaluation is seeded from its key so results do not depend on the order
    (or thread) in which individuals are evaluated.
    """

    def __init__(self, img: Image, marks: MarkSet, texture: TextureMap, m: int = 8,
                 attacks=None, seed: int = 0, train_cfg: TrainConfig | None = None,
                 workers: int = 1):
        self.img, self.marks, self.texture, self.m = img, marks, texture, m
        self.attacks = list(attacks) if attacks is not None else optimization_attack_set()
        self.seed = seed
        self.train_cfg = train_cfg
        self.workers = workers
        self.cache = {}

    def evaluate(self, pair: ThresholdPair) -> np.ndarray:
        key = (round(pair.delta_q, 2), round(pair.delta_c, 2))
        if key not in self.cache:
            self.cache[key] = self._evaluate(ThresholdPair(*key))
        return self.cache[key]

    def _evaluate(self, pair):
        s = (self.seed + zlib.crc32(repr((pair.delta_q, pair.delta_c)).encode())) % (2**31)
        res = embed_all(self.img, self.marks, self.texture, pair, "dual", self.m)
        wm = res.image
        model = pretrain_extractor(wm, self.marks.auth, self.m, seed=s, cfg=self.train_cfg)
        f1 = f2 = 0.0
        for spec in self.attacks:
            att = apply_attack(wm, spec)
            f1 += ber(extract_tiled(att, pair.delta_q, self.m), self.marks.copyright)
            tuned = fine_tune(model, att, self.marks.auth, self.m, seed=s, cfg=self.train_cfg)
            f2 += ber(extract_auth(tuned, att, self.m), self.marks.auth)
        n = max(len(self.attacks), 1)
        return np.array([f1 / n, f2 / n, mse(self.img, wm)])

    def __call__(self, xs) -> np.ndarray:
        keys = [_key(x) for x in xs]
        todo = sorted({k for k in keys if k not in self.cache})
        if self.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                for k, f in zip(todo, pool.map(lambda k: self._evaluate(ThresholdPair(*k)), todo)):
                    self.cache[k] = f
        else:
            for k in todo:
                self.cache[k] = self._evaluate(ThresholdPair(*k))
        return np.array([self.cache[k] for k in keys])


def evaluate(x: ThresholdPair, img: Image, marks: MarkSet, texture: TextureMap, m: int = 8,
             seed: int = 0) -> np.ndarray:
    return WatermarkObjective(img, marks, texture, m, seed=seed).evaluate(x)


def nsga2_run(img: Image, marks: MarkSet, texture: TextureMap, config: OptimizerConfig | None = None,
              seed: int = 0, m: int = 8, attacks=None) -> RunResult:
    cfg = config or OptimizerConfig()
    attacks = attacks if attacks is not None else optimization_attack_set()[: cfg.n_attacks]
    obj = WatermarkObjective(img, marks, texture, m, attacks, seed, workers=cfg.workers)
    return nsga2(obj, BOUNDS, cfg, seed)


# -- operating point ---------------------------------------------------------------


def select_operating_point(front, cap: float = 0.1):
    """Largest mean robustness (f1+f2)/2 not above ``cap``; else the minimum, flagged.

    Returns (ThresholdPair, feasible).
    """
    if not front:
        raise OptimizeError("empty front")
    means = np.array([(p.f[0] + p.f[1]) / 2 for p in front])
    # ties on the mean break toward lower distortion, then lower index
    order = sorted(range(len(front)), key=lambda i: (means[i], -front[i].f[2], i))
    ok = [i for i in order if means[i] <= cap]
    if ok:
        pick, feasible = ok[-1], True
    else:
        pick, feasible = order[0], False
        log.warning("no front member within the robustness budget %.3f; using the most robust", cap)
    x = _key(front[pick].x)  # the pair that was actually evaluated
    lo_q, hi_q = DELTA_Q_BOUNDS
    lo_c, hi_c = DELTA_C_BOUNDS
    pair = ThresholdPair(float(np.clip(x[0], lo_q, hi_q)), float(np.clip(x[1], lo_c, hi_c)))
    return pair, feasible
