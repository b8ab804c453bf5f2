"""Monte Carlo engine: stepwise and waiting-time-based simulation.

Randomness is counter-based: realization j consumes doubles from its own
Philox stream keyed by (master seed, j), so results are bit-identical for
any partitioning of the trajectories across workers. Trajectories are
stored as label-change events (run-length encoding of the sample matrix);
all realizations sharing a label share the same pure state, reconstructed
from the single propagation of the deterministic branch.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .jump_process import DecompositionState, DivergenceError, \
    resolve_jump_edges
from .master_equation import DecompositionHistory, analytic_history
from .systems import SystemModel

# Philox advance() skips 4 doubles per unit, so stream offsets must be
# 4-aligned; see _stream_block.
_PHILOX_BLOCK = 4


def _stream(seed: int, traj: int, salt: int = 0) -> np.random.Generator:
    key = np.array([np.uint64(seed) ^ np.uint64(salt) * np.uint64(0x9E3779B97F4A7C15),
                    np.uint64(traj)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _stream_block(seed: int, traj: int, start: int, count: int,
                  salt: int = 0) -> np.ndarray:
    """Doubles [start, start+count) of trajectory ``traj``'s stream."""
    if start % _PHILOX_BLOCK != 0:
        raise ValueError("stream offsets must be 4-aligned")
    g = _stream(seed, traj, salt)
    g.bit_generator.advance(start // _PHILOX_BLOCK)
    return g.random(count)


@dataclass
class SampleMatrix:
    """Run-length encoded N_t x N_S label matrix.

    ``event_*`` arrays record every label change, sorted by (step, traj):
    realization ``event_traj[m]`` carries label ``event_label[m]`` from
    time index ``event_step[m]`` on. Columns are piecewise constant in
    between. ``label_counts[i, a]`` is the number of realizations with
    label a at time index i.
    """

    times: np.ndarray
    seed: int
    n_samples: int
    n_labels: int
    initial_label: int
    event_step: np.ndarray
    event_traj: np.ndarray
    event_label: np.ndarray
    label_counts: np.ndarray

    @property
    def n_times(self) -> int:
        return len(self.times)

    def row(self, i: int) -> np.ndarray:
        """Labels of all realizations at time index i."""
        labels = np.full(self.n_samples, self.initial_label, dtype=np.int64)
        m = np.searchsorted(self.event_step, i, side="right")
        # events are (step, traj)-sorted, so later events overwrite earlier
        labels[self.event_traj[:m]] = self.event_label[:m]
        return labels

    def to_dense(self) -> np.ndarray:
        """Full N_t x N_S matrix; only sensible for small runs."""
        dense = np.empty((self.n_times, self.n_samples), dtype=np.int64)
        for i in range(self.n_times):
            dense[i] = self.row(i)
        return dense

    def occupation_fractions(self) -> np.ndarray:
        return self.label_counts / self.n_samples

    def first_exit_steps(self, i: int) -> np.ndarray:
        """For every realization, the first event step > i (or n_times)."""
        out = np.full(self.n_samples, self.n_times, dtype=np.int64)
        sel = self.event_step > i
        steps = self.event_step[sel]
        trajs = self.event_traj[sel]
        order = np.lexsort((steps, trajs))
        trajs_o = trajs[order]
        first = np.ones(len(trajs_o), dtype=bool)
        first[1:] = trajs_o[1:] != trajs_o[:-1]
        out[trajs_o[first]] = steps[order][first]
        return out

    def jumps_of(self, traj: int) -> list[tuple[int, int]]:
        """(step, new_label) events of one realization."""
        sel = self.event_traj == traj
        return list(zip(self.event_step[sel].tolist(),
                        self.event_label[sel].tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleMatrix):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.n_samples == other.n_samples
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.event_step, other.event_step)
            and np.array_equal(self.event_traj, other.event_traj)
            and np.array_equal(self.event_label, other.event_label)
            and np.array_equal(self.label_counts, other.label_counts)
        )

    def export_csv(self, path, trajectories=None, header: dict | None = None):
        """Write ``time_index,realization_index,label`` rows.

        With ``trajectories`` given, writes the full piecewise-constant
        column for each selected realization; otherwise writes the initial
        labels and the change events (run-length encoding).
        """
        with open(path, "w") as fh:
            fh.write(f"# seed={self.seed} n_samples={self.n_samples} "
                     f"n_times={self.n_times}\n")
            if header:
                items = " ".join(f"{k}={v}" for k, v in sorted(header.items()))
                fh.write(f"# {items}\n")
            fh.write("time_index,realization_index,label\n")
            if trajectories is not None:
                for j in trajectories:
                    labels = np.full(self.n_times, self.initial_label,
                                     dtype=np.int64)
                    for step, lab in self.jumps_of(int(j)):
                        labels[step:] = lab
                    for i in range(self.n_times):
                        fh.write(f"{i},{j},{labels[i]}\n")
            else:
                for j in range(self.n_samples):
                    fh.write(f"0,{j},{self.initial_label}\n")
                for s, j, lab in zip(self.event_step, self.event_traj,
                                     self.event_label):
                    fh.write(f"{s},{j},{lab}\n")


@dataclass
class RunResult:
    matrix: SampleMatrix
    history: DecompositionHistory
    # empirical per-step decomposition probabilities N_a(t)/N_S
    empirical_probabilities: np.ndarray = field(default=None, repr=False)


@dataclass
class _RateTables:
    """Per-step jump rates and target tables, one row per label."""

    total: np.ndarray          # (L, n_steps); +inf marks a divergent source
    target_cum: np.ndarray     # (L, n_steps, M) cumulative target fractions
    target_label: np.ndarray   # (L, n_steps, M), -1 padded


def _build_rate_tables(model: SystemModel, history: DecompositionHistory,
                       n_steps: int) -> _RateTables:
    n_labels = model.n_labels
    max_targets = max(2, max(len(ch.positive_map) for ch in model.channels))
    total = np.zeros((n_labels, n_steps))
    cum = np.ones((n_labels, n_steps, max_targets))
    tgt = np.full((n_labels, n_steps, max_targets), -1, dtype=np.int64)

    for i in range(n_steps):
        decomp = history.decomposition_at(i, strict=False)
        edges, divergent = resolve_jump_edges(model, decomp,
                                              float(history.times[i]))
        for label in range(n_labels):
            div = [e for e in divergent if e.source_label == label]
            if div:
                # whole remaining population must leave: probability 1,
                # targets weighted by the finite numerators
                total[label, i] = np.inf
                weights = np.array([e.rate_weight for e in div])
                frac = np.cumsum(weights) / weights.sum()
                cum[label, i, :len(div)] = frac
                tgt[label, i, :len(div)] = [e.target_label for e in div]
                continue
            own = [e for e in edges if e.source_label == label]
            if not own:
                continue
            weights = np.array([e.rate_weight for e in own])
            total[label, i] = weights.sum()
            frac = np.cumsum(weights) / weights.sum()
            cum[label, i, :len(own)] = frac
            tgt[label, i, :len(own)] = [e.target_label for e in own]
    return _RateTables(total, cum, tgt)


def _choose_targets(tables: _RateTables, labels: np.ndarray, step: int,
                    v: np.ndarray) -> np.ndarray:
    """Vectorized draw from the per-label target tables at one step."""
    cum = tables.target_cum[labels, step]          # (n, M)
    tgt = tables.target_label[labels, step]        # (n, M)
    idx = (v[:, None] >= cum).sum(axis=1)
    idx = np.minimum(idx, cum.shape[1] - 1)
    chosen = tgt[np.arange(len(labels)), idx]
    if np.any(chosen < 0):
        raise RuntimeError("jump drawn for a label with no outgoing edge")
    return chosen


def run_stepwise(model: SystemModel, n_samples: int, window=(0.0, 5.0),
                 dt: float = 1e-3, seed: int = 0, mode: str = "analytic-p",
                 history: DecompositionHistory | None = None,
                 threads: int = 1) -> RunResult:
    """Stepwise simulation: each realization jumps with probability
    Gamma dt per step, otherwise evolves deterministically.

    ``mode`` selects where the decomposition probabilities entering the
    negative-channel rates come from: "analytic-p" uses the closed forms,
    "self-consistent" refreshes P_a = N_a/N_S at every step boundary.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if history is None:
        history = analytic_history(model, window=window, step=dt)
    times = history.times
    n_steps = len(times) - 1

    if mode == "analytic-p":
        tables = _build_rate_tables(model, history, n_steps)
        finite = tables.total[np.isfinite(tables.total)]
        if finite.size and finite.max() * dt > 0.1:
            warnings.warn(
                f"max Gamma*dt = {finite.max() * dt:.3g} > 0.1: stepwise "
                "jump probabilities are too coarse", RuntimeWarning,
            )
        matrix = _run_stepwise_analytic(model, tables, times, n_samples,
                                        dt, seed, threads)
        empirical = matrix.label_counts / n_samples
        return RunResult(matrix, history, empirical)
    if mode == "self-consistent":
        matrix = _run_stepwise_self_consistent(model, history, n_samples,
                                               dt, seed)
        empirical = matrix.label_counts / n_samples
        return RunResult(matrix, history, empirical)
    raise ValueError(f"unknown mode {mode!r}")


def _run_stepwise_analytic(model, tables, times, n_samples, dt, seed,
                           threads) -> SampleMatrix:
    n_steps = len(times) - 1
    n_labels = model.n_labels
    p_jump = np.where(np.isfinite(tables.total),
                      np.minimum(tables.total * dt, 1.0), 1.0)

    # trajectory-major blocks: each block is independent given the tables
    budget = 20_000_000  # doubles held at once
    block = max(1, min(n_samples, budget // max(n_steps, 1)))
    starts = list(range(0, n_samples, block))

    def simulate_block(j0: int) -> tuple:
        j1 = min(j0 + block, n_samples)
        nb = j1 - j0
        u = np.empty((nb, n_steps))
        for j in range(j0, j1):
            u[j - j0] = _stream_block(seed, j, 0, n_steps)
        labels = np.zeros(nb, dtype=np.int64)
        delta = np.zeros((n_steps + 1, n_labels), dtype=np.int64)
        ev_step, ev_traj, ev_label = [], [], []
        for i in range(n_steps):
            p = p_jump[labels, i]
            ui = u[:, i]
            jm = ui < p
            if not jm.any():
                continue
            v = ui[jm] / p[jm]
            old = labels[jm]
            new = _choose_targets(tables, old, i, v)
            labels[jm] = new
            idx = np.nonzero(jm)[0]
            ev_step.append(np.full(len(idx), i + 1, dtype=np.int64))
            ev_traj.append(idx + j0)
            ev_label.append(new)
            np.add.at(delta[i + 1], new, 1)
            np.add.at(delta[i + 1], old, -1)
        return ev_step, ev_traj, ev_label, delta

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(simulate_block, starts))
    else:
        results = [simulate_block(s) for s in starts]

    return _assemble_matrix(times, seed, n_samples, n_labels, results)


def _assemble_matrix(times, seed, n_samples, n_labels, block_results,
                     initial_label: int = 0) -> SampleMatrix:
    n_steps = len(times) - 1
    steps_all, trajs_all, labels_all = [], [], []
    delta = np.zeros((n_steps + 1, n_labels), dtype=np.int64)
    for ev_step, ev_traj, ev_label, d in block_results:
        if ev_step:
            steps_all.append(np.concatenate(ev_step))
            trajs_all.append(np.concatenate(ev_traj))
            labels_all.append(np.concatenate(ev_label))
        delta += d
    if steps_all:
        steps = np.concatenate(steps_all)
        trajs = np.concatenate(trajs_all)
        labels = np.concatenate(labels_all)
        order = np.lexsort((trajs, steps))
        steps, trajs, labels = steps[order], trajs[order], labels[order]
    else:
        steps = trajs = labels = np.empty(0, dtype=np.int64)

    counts = np.cumsum(delta, axis=0)
    counts[:, initial_label] += n_samples
    return SampleMatrix(
        times=np.asarray(times), seed=seed, n_samples=n_samples,
        n_labels=n_labels, initial_label=initial_label,
        event_step=steps, event_traj=trajs, event_label=labels,
        label_counts=counts,
    )


def _run_stepwise_self_consistent(model, history, n_samples, dt,
                                  seed) -> SampleMatrix:
    """All realizations complete a step before any begins the next; the
    empirical probabilities are snapshot at the step boundary."""
    times = history.times
    n_steps = len(times) - 1
    n_labels = model.n_labels

    labels = np.zeros(n_samples, dtype=np.int64)
    counts = np.zeros((n_steps + 1, n_labels), dtype=np.int64)
    counts[0, 0] = n_samples
    ev_step, ev_traj, ev_label = [], [], []

    chunk = 512  # 4-aligned stream chunking, see _stream_block
    u_chunk = None
    for i in range(n_steps):
        if i % chunk == 0:
            width = min(chunk, n_steps - i)
            u_chunk = np.empty((n_samples, width))
            for j in range(n_samples):
                u_chunk[j] = _stream_block(seed, j, i, width)
        ui = u_chunk[:, i % chunk]

        cur = counts[i]
        decomp = _empirical_decomposition(model, history, i, cur, n_samples)
        edges, divergent = resolve_jump_edges(model, decomp,
                                              float(times[i]))
        if divergent:
            e = divergent[0]
            raise DivergenceError(float(times[i]), e.channel,
                                  e.source_label, e.target_label)

        total = np.zeros(n_labels)
        cum = np.ones((n_labels, max(2, n_labels)))
        tgt = np.full((n_labels, max(2, n_labels)), -1, dtype=np.int64)
        for label in range(n_labels):
            own = [e for e in edges if e.source_label == label]
            if not own:
                continue
            w = np.array([e.rate_weight for e in own])
            total[label] = w.sum()
            cum[label, :len(own)] = np.cumsum(w) / w.sum()
            tgt[label, :len(own)] = [e.target_label for e in own]

        p = np.minimum(total[labels] * dt, 1.0)
        jm = ui < p
        counts[i + 1] = cur
        if jm.any():
            v = ui[jm] / p[jm]
            old = labels[jm]
            cum_j = cum[old]
            idx = (v[:, None] >= cum_j).sum(axis=1)
            idx = np.minimum(idx, cum_j.shape[1] - 1)
            new = tgt[old, idx]
            if np.any(new < 0):
                raise RuntimeError("jump drawn for label with no edge")
            labels[jm] = new
            traj_idx = np.nonzero(jm)[0]
            ev_step.append(np.full(len(traj_idx), i + 1, dtype=np.int64))
            ev_traj.append(traj_idx)
            ev_label.append(new)
            np.add.at(counts[i + 1], new, 1)
            np.add.at(counts[i + 1], old, -1)

    if ev_step:
        steps = np.concatenate(ev_step)
        trajs = np.concatenate(ev_traj)
        labs = np.concatenate(ev_label)
        order = np.lexsort((trajs, steps))
        steps, trajs, labs = steps[order], trajs[order], labs[order]
    else:
        steps = trajs = labs = np.empty(0, dtype=np.int64)
    return SampleMatrix(
        times=times, seed=seed, n_samples=n_samples, n_labels=n_labels,
        initial_label=0, event_step=steps, event_traj=trajs,
        event_label=labs, label_counts=counts,
    )


def _empirical_decomposition(model, history, i, counts, n_samples):
    entries = tuple(
        (lab, history.state_of(lab, i), counts[lab] / n_samples)
        for lab in model.labels
    )
    return DecompositionState(entries, time=float(history.times[i]),
                              mode="empirical")


def run_wtd_based(model: SystemModel, n_samples: int, window=(0.0, 5.0),
                  dt: float = 1e-3, seed: int = 0,
                  history: DecompositionHistory | None = None,
                  threads: int = 1) -> RunResult:
    """Waiting-time-based simulation with analytic decomposition
    probabilities.

    Each realization repeatedly samples its next jump time by inverse
    transform from the exact distribution and evolves deterministically in
    between; a fresh random number is drawn after every jump.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if history is None:
        history = analytic_history(model, window=window, step=dt)
    times = history.times
    n_steps = len(times) - 1
    n_labels = model.n_labels

    tables = _build_rate_tables(model, history, n_steps)
    # cumulative rate integral on the grid, left-endpoint rule so the
    # per-step no-jump probability matches the stepwise method to O(dt^2);
    # an infinite rate (divergent source) is absorbing
    gam = tables.total  # (L, n_steps), rate at the start of each interval
    g_cum = np.concatenate(
        [np.zeros((n_labels, 1)), np.cumsum(gam * dt, axis=1)], axis=1,
    )

    def simulate_range(j0: int, j1: int) -> tuple:
        ev_step, ev_traj, ev_label = [], [], []
        delta = np.zeros((n_steps + 1, n_labels), dtype=np.int64)
        for j in range(j0, j1):
            rng = _stream(seed, j, salt=1)
            cur = 0
            label = 0
            while cur < n_steps:
                eta = rng.random()
                xi = -np.log1p(-eta)
                g_row = g_cum[label]
                base = g_row[cur]
                if not np.isfinite(base):
                    # entered a label past its divergence time: rebuild the
                    # cumulative integral locally from the current index
                    g_local = np.concatenate(
                        [[0.0], np.cumsum(gam[label, cur:] * dt)])
                    idx_l = int(np.searchsorted(g_local, xi, side="right"))
                    if idx_l > n_steps - cur:
                        break
                    idx = cur + idx_l
                else:
                    idx = int(np.searchsorted(g_row, base + xi, side="right"))
                    if idx > n_steps:
                        break
                step_idx = min(idx, n_steps)
                # the jump was produced by the rate at the interval start
                rate_idx = step_idx - 1
                v = rng.random()
                cum_row = tables.target_cum[label, rate_idx]
                tgt_row = tables.target_label[label, rate_idx]
                m = int((v >= cum_row).sum())
                m = min(m, len(cum_row) - 1)
                new = int(tgt_row[m])
                if new < 0:
                    raise RuntimeError("no target available at jump time")
                ev_step.append(step_idx)
                ev_traj.append(j)
                ev_label.append(new)
                delta[step_idx, new] += 1
                delta[step_idx, label] -= 1
                label = new
                cur = step_idx
        return (
            [np.array(ev_step, dtype=np.int64)] if ev_step else [],
            [np.array(ev_traj, dtype=np.int64)] if ev_traj else [],
            [np.array(ev_label, dtype=np.int64)] if ev_label else [],
            delta,
        )

    block = max(1, (n_samples + max(threads, 1) - 1) // max(threads, 1))
    ranges = [(a, min(a + block, n_samples))
              for a in range(0, n_samples, block)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: simulate_range(*r), ranges))
    else:
        results = [simulate_range(*r) for r in ranges]

    matrix = _assemble_matrix(times, seed, n_samples, n_labels, results)
    return RunResult(matrix, history, matrix.label_counts / n_samples)


@dataclass
class CohortEstimate:
    """Empirical waiting-time estimate for one cohort.

    The cohort is every realization in state alpha at time index i; the
    survival fraction at a later index counts those that have not left
    alpha at any intermediate step (nested intersections).
    """

    source_label: int
    start_index: int
    times: np.ndarray
    survival: np.ndarray
    cohort_size: int

    @property
    def wtd(self) -> np.ndarray:
        return 1.0 - self.survival


def estimate_wtd(matrix: SampleMatrix, alpha: int, i: int,
                 k: int | None = None) -> CohortEstimate:
    """Cohort-survival estimate of the waiting-time distribution.

    W(t_l) = 1 - |S_l| / |C| where C is the set of realizations in state
    alpha at t_i and S_l those still in alpha at every step up to t_l.
    """
    if k is None:
        k = matrix.n_times - 1
    if not 0 <= i <= k < matrix.n_times:
        raise ValueError("need 0 <= i <= k < n_times")
    row = matrix.row(i)
    cohort = np.nonzero(row == alpha)[0]
    if len(cohort) == 0:
        raise ValueError(f"empty cohort: no realization in {alpha} at index {i}")
    exit_steps = matrix.first_exit_steps(i)[cohort]
    # survival[l - i] = fraction with first exit after l
    counts = np.bincount(np.clip(exit_steps - i, 0, k - i + 1),
                         minlength=k - i + 2)
    leavers = np.cumsum(counts[:k - i + 1])
    survival = (len(cohort) - leavers) / len(cohort)
    return CohortEstimate(
        source_label=alpha, start_index=i,
        times=matrix.times[i:k + 1], survival=survival,
        cohort_size=len(cohort),
    )


def ensemble_average(matrix: SampleMatrix,
                     history: DecompositionHistory) -> np.ndarray:
    """rho_hat(t_i) = sum_a (N_a/N_S) |psi^a(t_i)><psi^a(t_i)|.

    Returns an (n_times, d, d) array of density matrices.
    """
    d = history.model.dim
    n_t = matrix.n_times
    out = np.zeros((n_t, d, d), dtype=complex)
    fractions = matrix.label_counts / matrix.n_samples
    for lab in history.model.labels:
        frac = fractions[:, lab]
        if lab == 0:
            amps = history.psi0_amplitudes / \
                np.sqrt(history.norm_sq)[:, None]
            out += frac[:, None, None] * np.einsum(
                "ti,tj->tij", amps, amps.conj())
        else:
            amps = history.model.fixed_states[lab]
            proj = np.outer(amps, amps.conj())
            out += frac[:, None, None] * proj[None, :, :]
    return out
