"""Posterior resampling draws: Bayesian bootstrap and Dirichlet process.

One draw is a weighted collection of whole-trajectory atoms. The
Bayesian bootstrap keeps the n observed trajectories and draws flat
Dirichlet(1, ..., 1) weights over them. The DP posterior draws J atoms
independently - each a uniform copy of an observed trajectory with
probability n/(alpha+n), or a base-measure atom with probability
alpha/(alpha+n) whose outcomes are regenerated by a synthetic-outcome
generator - and weights them by truncated stick-breaking with
concentration alpha_n = alpha + n.

Resampling is at the subject level: every atom's rows are a contiguous
copy of one observed unit's rows, preserving within-subject correlation.

Determinism: every operation is a pure function of its inputs and an
RngStream; identical (seed, stream) pairs reproduce draws bit-for-bit
across runs, platforms and worker schedules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .panel import PanelDataset, Trajectory

__all__ = [
    "RngStream",
    "StickWeights",
    "ResampleDraw",
    "derive_seed",
    "dirichlet_flat_weights",
    "stick_breaking",
    "draw_bb",
    "draw_dp",
]

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Named, reproducible random stream: (seed, stream index)."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.stream < 0:
            raise ValueError("stream index must be >= 0")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.seed & _SEED_MASK, self.stream])
        )


def derive_seed(seed: int, *keys: int) -> int:
    """Stable 64-bit child seed from a master seed and integer keys."""
    ss = np.random.SeedSequence([seed & _SEED_MASK, *[k & _SEED_MASK for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class StickWeights:
    """Truncated, renormalized stick-breaking weights.

    ``raw_tail`` is the unbroken stick mass prod(1 - V_k) at the
    truncation point; it is below ``epsilon`` unless truncation stopped
    at the configured maximum length.
    """

    weights: np.ndarray
    alpha_n: float
    epsilon: float
    truncated_at: int
    raw_tail: float


def dirichlet_flat_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Flat Dirichlet(1, ..., 1) weights via normalized unit exponentials."""
    if n < 1:
        raise ValueError("n must be >= 1")
    e = rng.standard_exponential(n)
    return e / e.sum()


def stick_breaking(alpha_n: float, epsilon: float, j_max: int,
                   rng: np.random.Generator, v_sequence=None) -> StickWeights:
    """Stick-breaking weights p_j = V_j prod_{k<j}(1 - V_k), V_j ~ Beta(1, alpha_n).

    Beta variables come from the inverse CDF 1 - u^(1/alpha_n) (exact and
    branch-free). Breaking stops at the first j where the remaining stick
    drops below ``epsilon``, or at ``j_max``; the kept weights are
    renormalized to sum to one.

    ``v_sequence`` overrides the Beta draws with a fixed sequence (test
    hook).
    """
    if alpha_n <= 0:
        raise ValueError("alpha_n must be > 0")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    if v_sequence is None:
        u = rng.random(j_max)
        v = 1.0 - u ** (1.0 / alpha_n)
    else:
        v = np.asarray(v_sequence, dtype=float)[:j_max]
        if len(v) < j_max:
            raise ValueError("v_sequence shorter than j_max")
    tail = np.cumprod(1.0 - v)
    p_raw = v * np.concatenate([[1.0], tail[:-1]])
    below = np.nonzero(tail < epsilon)[0]
    j = int(below[0]) + 1 if below.size else j_max
    weights = p_raw[:j] / p_raw[:j].sum()
    return StickWeights(weights=weights, alpha_n=float(alpha_n), epsilon=float(epsilon),
                        truncated_at=j, raw_tail=float(tail[j - 1]))


@dataclass
class ResampleDraw:
    """One posterior-bootstrap realization over trajectory atoms.

    Atom j references source unit ``atom_units[j]``; ``origins[j]`` is
    True for base-measure atoms (outcomes regenerated synthetically).
    ``y`` holds the draw's pooled outcomes and is the only field that
    changes after construction (once, when a generator regenerates the
    base-measure outcomes); ``d`` and ``x`` are read-only views of the
    source panel.
    """

    data: PanelDataset
    kind: str
    atom_units: np.ndarray
    origins: np.ndarray
    weights: np.ndarray
    stick: StickWeights | None
    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    row_atom: np.ndarray
    atom_lengths: np.ndarray
    _row_weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_atoms(self) -> int:
        return len(self.atom_units)

    @property
    def n_rows(self) -> int:
        return len(self.y)

    def row_weights(self) -> np.ndarray:
        """Atom weight attached to each of its rows (GEE fitting weights)."""
        if self._row_weights is None:
            self._row_weights = self.weights[self.row_atom]
        return self._row_weights

    def apo_row_weights(self) -> np.ndarray:
        """Atom weights spread equally over each atom's rows; sums to 1."""
        per_row = self.weights / self.atom_lengths
        return per_row[self.row_atom]

    @property
    def atoms(self):
        """Atoms as (Trajectory copy, origin) pairs, materialized lazily."""
        starts = np.concatenate([[0], np.cumsum(self.atom_lengths)])
        out = []
        for j, u in enumerate(self.atom_units):
            src = self.data.trajectories[u]
            sl = slice(starts[j], starts[j + 1])
            traj = Trajectory(
                unit_id=f"atom{j}:{src.unit_id}",
                times=src.times,
                outcomes=np.array(self.y[sl]),
                doses=src.doses,
                covariates=src.covariates,
            )
            out.append((traj, "base_measure" if self.origins[j] else "empirical"))
        return out


def _gather(data: PanelDataset, atom_units: np.ndarray, copy_y: bool):
    arr = data.arrays()
    rows = arr.rows_for_units(atom_units)
    lengths = arr.lengths[atom_units]
    row_atom = np.repeat(np.arange(len(atom_units), dtype=np.intp), lengths)
    y = arr.y[rows]
    if copy_y:
        y = np.array(y)
    return y, arr.d[rows], arr.x[rows], row_atom, lengths


def draw_bb(data: PanelDataset, rng: np.random.Generator) -> ResampleDraw:
    """Bayesian-bootstrap draw: observed trajectories, flat Dirichlet weights."""
    n = data.n_units
    if n < 2:
        raise ValueError("Bayesian bootstrap needs at least 2 units")
    weights = dirichlet_flat_weights(n, rng)
    atom_units = np.arange(n, dtype=np.intp)
    y, d, x, row_atom, lengths = _gather(data, atom_units, copy_y=False)
    return ResampleDraw(data=data, kind="bb", atom_units=atom_units,
                        origins=np.zeros(n, dtype=bool), weights=weights, stick=None,
                        y=y, d=d, x=x, row_atom=row_atom, atom_lengths=lengths)


def draw_dp(data: PanelDataset, alpha: float, j_target: int, gen,
            rng: np.random.Generator, epsilon: float = 1e-8) -> ResampleDraw:
    """Dirichlet-process posterior draw with stick-breaking weights.

    ``gen`` regenerates outcomes for base-measure atoms (see the
    dose-response module); pass None to keep copied outcomes everywhere
    (used by mixture-probability tests).

    RNG consumption order: stick weights, origin flags, source units,
    then whatever ``gen`` draws.
    """
    n = data.n_units
    if n < 2:
        raise ValueError("DP resampling needs at least 2 units")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if j_target < 1:
        raise ValueError("j_target must be >= 1")
    stick = stick_breaking(alpha + n, epsilon, j_target, rng)
    j = stick.truncated_at
    origins = rng.random(j) < alpha / (alpha + n)
    atom_units = rng.integers(0, n, size=j).astype(np.intp)
    y, d, x, row_atom, lengths = _gather(data, atom_units, copy_y=True)
    draw = ResampleDraw(data=data, kind="dp", atom_units=atom_units, origins=origins,
                        weights=stick.weights, stick=stick, y=y, d=d, x=x,
                        row_atom=row_atom, atom_lengths=lengths)
    if gen is not None:
        gen.regenerate(draw, rng)
    return draw
