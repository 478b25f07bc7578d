"""Differential evolution over anchor genomes, with boundary repair,
cached parent fitness, and early stop on attack success.

The decision vector is the concatenation of all patches' anchors (2*n*p
reals), so one population trades off both patches jointly. Mutation and
crossover run on that flat vector (DE/rand/1/bin, crossover at anchor
granularity); every proposed anchor is then repaired into its feasible
region by bisecting toward the parent's anchor, so populations stay
feasible by construction.

Randomness is drawn from per-(seed, generation, member) substreams, which
makes results bit-identical whether child evaluations run serially or on a
thread pool.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import boundary, fitness, geometry
from .compose import CoverModel, ScenePair, apply_patch, union_masks
from .config import ConfigError, RunConfig
from .geometry import BinaryMask
from .oracle import target_score


class SceneNotDetectable(ValueError):
    """Clean score at or below the threshold; the sample cannot be attacked."""


@dataclass(frozen=True)
class PatchShape:
    region: boundary.FeasibleRegion
    anchors: np.ndarray  # (n, 2)


@dataclass(frozen=True)
class ShapeGenome:
    patches: tuple[PatchShape, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.anchors.reshape(-1) for p in self.patches])

    def with_flat(self, vec: np.ndarray) -> "ShapeGenome":
        out, k = [], 0
        for p in self.patches:
            n = p.anchors.shape[0]
            out.append(PatchShape(p.region, vec[k : k + 2 * n].reshape(n, 2).copy()))
            k += 2 * n
        return ShapeGenome(tuple(out))

    def anchor_slots(self):
        """Yields (patch_index, anchor_index, region) over the flat layout order."""
        for q, p in enumerate(self.patches):
            for j in range(p.anchors.shape[0]):
                yield q, j, p.region

    def is_feasible(self) -> bool:
        return all(
            boundary.feasible(p.region, j, p.anchors[j]).rho == 1
            for p in self.patches
            for j in range(p.anchors.shape[0])
        )


@dataclass
class Population:
    generation: int
    members: list[ShapeGenome]
    fitness: list[fitness.FitnessValue] | None
    rng_seed: int


@dataclass
class AttackResult:
    success: bool
    stop_generation: int
    best: ShapeGenome
    masks: list[BinaryMask]
    adv_pair: ScenePair
    final_scores: tuple[float, float]
    queries_used: int
    best_fitness: fitness.FitnessValue
    clean_scores: tuple[float, float]


def build_regions(gt_box, config: RunConfig) -> list[boundary.FeasibleRegion]:
    """One feasible-region bundle per configured patch center."""
    x1, y1, x2, y2 = (float(v) for v in gt_box)
    bw, bh = x2 - x1, y2 - y1
    radius = config.radius_fraction * bh
    regions = []
    for fx, fy in config.patch_centers:
        center = (x1 + fx * bw, y1 + fy * bh)
        region = boundary.build_region(
            center, radius, config.inner_fraction, config.anchors_per_patch, gt_box, config.outer_shrink
        )
        init = boundary.region_initial_anchors(region)
        if not all(boundary.feasible(region, j, init[j]).rho for j in range(config.anchors_per_patch)):
            raise ConfigError(
                f"patch at ({fx}, {fy}) has initial anchors outside the outer border; "
                "shrink the radius or move the patch"
            )
        regions.append(region)
    return regions


def initial_genome(regions) -> ShapeGenome:
    return ShapeGenome(tuple(PatchShape(r, boundary.region_initial_anchors(r)) for r in regions))


def _member_rng(seed: int, generation: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, generation, index])


def init_population(config: RunConfig, regions, seed: int) -> Population:
    """Member 0 is the pure starting layout; the rest add feasible jitter."""
    if config.population_size < 4:
        raise ConfigError("DE/rand/1 needs a population of at least 4")
    base = initial_genome(regions)
    members = [base]
    for i in range(1, config.population_size):
        rng = _member_rng(seed, 0, i)
        patches = []
        for p in base.patches:
            scale = p.region.radius * 0.5
            anchors = p.anchors.copy()
            for j in range(anchors.shape[0]):
                for _ in range(100):
                    cand = p.anchors[j] + rng.uniform(-scale, scale, size=2)
                    if boundary.feasible(p.region, j, cand).rho:
                        anchors[j] = cand
                        break
            patches.append(PatchShape(p.region, anchors))
        members.append(ShapeGenome(tuple(patches)))
    return Population(generation=0, members=members, fitness=None, rng_seed=seed)


def propose_child(pop: Population, i: int, f_weight: float, cr: float, rng: np.random.Generator) -> ShapeGenome:
    """DE/rand/1/bin child for member i, repaired into feasibility."""
    q = len(pop.members)
    if q < 4:
        raise ValueError("DE/rand/1 needs at least 4 members")
    perm = rng.permutation(q)
    r1, r2, r3 = [int(r) for r in perm if r != i][:3]
    parent = pop.members[i]
    x_i = parent.flat()
    v = pop.members[r1].flat() + f_weight * (pop.members[r2].flat() - pop.members[r3].flat())

    slots = x_i.shape[0] // 2
    cross = rng.random(slots) < cr
    cross[int(rng.integers(slots))] = True
    mixed = np.where(np.repeat(cross, 2), v, x_i)

    child = parent.with_flat(mixed)
    repaired = []
    for (qi, j, region), anchors in zip(child.anchor_slots(), _iter_anchors(child)):
        repaired.append(boundary.repair(region, j, anchors, parent.patches[qi].anchors[j]))
    return parent.with_flat(np.concatenate([a.reshape(-1) for a in repaired]))


def _iter_anchors(genome: ShapeGenome):
    for p in genome.patches:
        for j in range(p.anchors.shape[0]):
            yield p.anchors[j]


def render_masks(genome: ShapeGenome, height: int, width: int, samples_per_segment: int) -> list[BinaryMask]:
    return [
        geometry.rasterize(geometry.close_contour(p.anchors, samples_per_segment), height, width)
        for p in genome.patches
    ]


def evaluate(genome: ShapeGenome, scene: ScenePair, oracles, config: RunConfig) -> fitness.FitnessValue:
    """Render, compose, query both oracles once, and score.

    Degenerate geometry scores as zero progress rather than raising; DE just
    selects it away.
    """
    if scene.clean_scores is None:
        raise ValueError("scene clean scores must be precomputed")
    clean_vis, clean_inf = scene.clean_scores
    vis_oracle, inf_oracle = oracles
    cover = CoverModel(config.cover_visible, config.cover_infrared)
    try:
        masks = render_masks(genome, scene.height, scene.width, config.samples_per_segment)
    except ValueError:
        return fitness.FitnessValue(1.0, 0.0, 0.0, clean_vis, clean_inf)
    adv = apply_patch(scene, union_masks(masks), cover)
    f_vis = target_score(vis_oracle.detect(adv.visible), scene.gt_box)
    f_inf = target_score(inf_oracle.detect(adv.infrared), scene.gt_box)
    return fitness.make_fitness(clean_vis, f_vis, clean_inf, f_inf, config.threshold, config.lambda_)


def _keys(values, mode) -> np.ndarray:
    return np.array([fitness.selection_key(v, mode) for v in values])


def _sorted_desc(pop: Population, mode: str) -> None:
    order = np.argsort(-_keys(pop.fitness, mode), kind="stable")
    pop.members = [pop.members[k] for k in order]
    pop.fitness = [pop.fitness[k] for k in order]


def run_attack(
    scene: ScenePair,
    oracles,
    config: RunConfig,
    seed: int | None = None,
    jobs: int = 1,
    progress_cb=None,
) -> AttackResult:
    """Full search loop for one scene; see the module docstring for semantics."""
    config.validate()
    seed = config.seed if seed is None else seed
    vis_oracle, inf_oracle = oracles
    queries_before = vis_oracle.queries + inf_oracle.queries

    clean_vis = target_score(vis_oracle.detect(scene.visible), scene.gt_box)
    clean_inf = target_score(inf_oracle.detect(scene.infrared), scene.gt_box)
    if min(clean_vis, clean_inf) <= config.threshold:
        raise SceneNotDetectable(
            f"scene {scene.id}: clean scores ({clean_vis:.3f}, {clean_inf:.3f}) "
            f"do not exceed the threshold {config.threshold}"
        )
    scene = dataclasses.replace(scene, clean_scores=(clean_vis, clean_inf))

    def evaluate_all(genomes):
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(lambda g: evaluate(g, scene, oracles, config), genomes))
        return [evaluate(g, scene, oracles, config) for g in genomes]

    pop = init_population(config, build_regions(scene.gt_box, config), seed)
    pop.fitness = evaluate_all(pop.members)

    stop_generation = config.max_generations
    for k in range(config.max_generations):
        _sorted_desc(pop, config.fitness_mode)
        best = pop.fitness[0]
        if config.stop_on_success and fitness.attack_success(best.f_vis_adv, best.f_inf_adv, config.threshold):
            stop_generation = k
            break
        children = [
            propose_child(pop, i, config.de_f, config.de_cr, _member_rng(seed, k + 1, i))
            for i in range(config.population_size)
        ]
        child_fitness = evaluate_all(children)
        for i in range(config.population_size):
            if fitness.selection_key(child_fitness[i], config.fitness_mode) > fitness.selection_key(
                pop.fitness[i], config.fitness_mode
            ):
                pop.members[i] = children[i]
                pop.fitness[i] = child_fitness[i]
        pop.generation = k + 1
        if progress_cb is not None:
            best_now = max(pop.fitness, key=lambda v: fitness.selection_key(v, config.fitness_mode))
            progress_cb(
                {
                    "generation": k,
                    "best_joint": best_now.joint,
                    "best_dis_vis": best_now.dis_vis,
                    "best_dis_inf": best_now.dis_inf,
                    "queries": vis_oracle.queries + inf_oracle.queries - queries_before,
                }
            )

    _sorted_desc(pop, config.fitness_mode)
    best_genome, best_fit = pop.members[0], pop.fitness[0]
    masks = render_masks(best_genome, scene.height, scene.width, config.samples_per_segment)
    cover = CoverModel(config.cover_visible, config.cover_infrared)
    adv_pair = apply_patch(scene, union_masks(masks), cover)
    queries_used = vis_oracle.queries + inf_oracle.queries - queries_before
    return AttackResult(
        success=fitness.attack_success(best_fit.f_vis_adv, best_fit.f_inf_adv, config.threshold),
        stop_generation=stop_generation,
        best=best_genome,
        masks=masks,
        adv_pair=adv_pair,
        final_scores=(best_fit.f_vis_adv, best_fit.f_inf_adv),
        queries_used=queries_used,
        best_fitness=best_fit,
        clean_scores=(clean_vis, clean_inf),
    )
