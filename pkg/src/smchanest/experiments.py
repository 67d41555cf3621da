"""Scenario definitions, the trial-batched Monte Carlo engine, experiment
runners (learning curves, MSE vs SNR, BER, analysis validation, complexity
table), and deterministic CSV/metadata output.

Determinism: every trial owns RNG substreams keyed by (seed, trial index),
trials are processed in fixed-size chunks, and metric reduction folds chunks
in index order, so results are byte-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis as ana
from .detection import qpsk_demod, qpsk_slice
from .estimators import RLS_P_SCALE, StateCorruptionError
from .fading import CLARKE, FadingProcess, FadingSpec
from .numerics import ParameterError, RngStream
from .wsn import Topology, amplification_matrix, draw_channels, make_packet

CHUNK_TRIALS = 64          # fixed so the reduction order never depends on workers
DEFAULT_SNR_REF_POWER = 0.605   # calibrated received-power reference (see configs)

GENIE = "genie"
DECISION_DIRECTED = "decision-directed"

_SUB_CHANNEL, _SUB_PACKET, _SUB_NOISE, _SUB_SOURCE = 0, 1, 2, 3


class CsvValidationError(ValueError):
    """An emitted CSV failed its self-validation pass."""


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator variant: algorithm plus its parameters. A fixed bound
    uses `gamma`; the time-varying bound uses tvb=True with (alpha, beta) and
    an optional explicit gamma0 (default: the bound's fixed point under the
    nominal channel statistics)."""

    algorithm: str
    gamma: float | None = None
    tvb: bool = False
    alpha: float = 1.5
    beta: float = 0.01
    gamma0: float | None = None
    step_size: float = 1.0
    forgetting: float = 0.998

    def __post_init__(self):
        if self.algorithm not in ("nlms", "sm-nlms", "rls", "beacon", "mmse"):
            raise ParameterError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm in ("sm-nlms", "beacon"):
            if not self.tvb and self.gamma is None:
                raise ParameterError(f"{self.algorithm} needs gamma= or tvb")
            if self.gamma is not None and self.gamma < 0:
                raise ParameterError("gamma must be >= 0")
            if self.algorithm == "beacon" and not self.tvb and self.gamma == 0:
                raise ParameterError("beacon requires gamma > 0")
        if self.algorithm == "rls" and not 0 < self.forgetting <= 1:
            raise ParameterError("rls forgetting factor must be in (0, 1]")

    @property
    def label(self) -> str:
        if self.algorithm in ("sm-nlms", "beacon"):
            return f"{self.algorithm}-tvb" if self.tvb else f"{self.algorithm}-g{self.gamma:g}"
        if self.algorithm == "rls":
            return f"rls-{self.forgetting:g}"
        if self.algorithm == "nlms" and self.step_size != 1.0:
            return f"nlms-mu{self.step_size:g}"
        return self.algorithm


@dataclass(frozen=True)
class Scenario:
    """Everything one experiment needs: network, fading, operating point,
    packet layout, estimator variants, and Monte Carlo bookkeeping."""

    topology: Topology
    fading: FadingSpec
    snr_db: float
    n_total: int
    n_train: int
    variants: tuple[EstimatorSpec, ...]
    trials: int
    seed: int
    feed: str = GENIE
    amplification: float = 1.0
    snr_ref_power: float = DEFAULT_SNR_REF_POWER
    snr_grid_db: tuple[float, ...] | None = None
    gamma_grid: tuple[float, ...] | None = None
    doppler_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0 < self.n_train <= self.n_total:
            raise ParameterError(
                f"need 0 < n_train <= n_total, got {self.n_train}/{self.n_total}"
            )
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.feed not in (GENIE, DECISION_DIRECTED):
            raise ParameterError(f"unknown feed mode {self.feed!r}")
        if not self.variants:
            raise ParameterError("scenario needs at least one estimator variant")
        if self.snr_ref_power <= 0:
            raise ParameterError("snr_ref_power must be > 0")
        labels = [v.label for v in self.variants]
        if len(set(labels)) != len(labels):
            raise ParameterError(f"variant labels must be unique, got {labels}")

    def noise_variance(self, snr_db: float | None = None) -> float:
        snr = self.snr_db if snr_db is None else snr_db
        return self.snr_ref_power * 10.0 ** (-snr / 10.0)

    def nominal_channel_energy(self) -> float:
        """Expected squared Frobenius norm of the stacked channel."""
        return self.fading.entry_power * self.topology.stacked_nonzeros


@dataclass
class RunMetrics:
    """Outputs of one runner; only the fields that apply to its kind are set."""

    kind: str
    labels: tuple[str, ...]
    noise_var: float | None = None
    iterations: np.ndarray | None = None
    mse_db: dict = field(default_factory=dict)           # label -> (n,)
    mse_raw: dict = field(default_factory=dict)          # label -> (n,)
    update_rate: dict = field(default_factory=dict)      # label -> float | (grid,)
    final_gamma: dict = field(default_factory=dict)      # tvb label -> float
    error_norms: dict = field(default_factory=dict)      # label -> (trials, n)
    snr_grid_db: np.ndarray | None = None
    steady_mse_db: dict = field(default_factory=dict)    # label -> (snr,)
    ber: dict = field(default_factory=dict)              # label -> (snr,)
    ber_packet_errors: dict = field(default_factory=dict)  # label -> (snr, trials)
    ber_bits_per_packet: int = 0
    gamma_grid: np.ndarray | None = None
    analysis: dict = field(default_factory=dict)         # column name -> (grid,)
    table: dict = field(default_factory=dict)            # complexity columns
    info: dict = field(default_factory=dict)             # metadata strings/numbers


# ---------------------------------------------------------------------------
# Chunked engine
# ---------------------------------------------------------------------------

def _thread_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SMCHANEST_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chunks(trials: int):
    return [(lo, min(lo + CHUNK_TRIALS, trials)) for lo in range(0, trials, CHUNK_TRIALS)]


def _map_chunks(fn, trials: int, threads: int | None):
    """Run fn(lo, hi) over fixed chunks, returning results in chunk order.
    Failures are re-raised with the owning trial range attached."""

    def wrapped(lo, hi):
        try:
            return fn(lo, hi)
        except Exception as exc:
            if exc.args:
                exc.args = (f"trials [{lo}, {hi}): {exc.args[0]}",) + exc.args[1:]
            raise

    spans = _chunks(trials)
    workers = min(_thread_count(threads), len(spans))
    if workers <= 1:
        return [wrapped(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(wrapped, lo, hi) for lo, hi in spans]
        return [f.result() for f in futures]


def _stacked_block_layout(top: Topology):
    """Diagonal block placement of the stacked channel: (rows, cols, source)
    where source identifies the constituent matrix."""
    layout = []
    r0 = c0 = 0
    for i in range(top.hops - 2, -1, -1):   # H_{r(m-1),d} ... H_{r(1),d}
        rows, cols = top.destinations, top.relay_counts[i]
        layout.append(((r0, r0 + rows), (c0, c0 + cols), ("relay_to_dest", i)))
        r0 += rows
        c0 += cols
    layout.append(((r0, r0 + top.destinations), (c0, c0 + top.sources), ("src_to_dest", None)))
    return layout


def _clarke_stacked(rng: RngStream, scenario: Scenario, doppler: float, n: int) -> np.ndarray:
    """Time-varying stacked channel (n, M, N) from independent per-block
    Clarke processes. Block parameters are drawn from substreams that do not
    depend on the Doppler value, so sweeps over rates share fading geometry."""
    top = scenario.topology
    h = np.zeros((n, top.stacked_rows, top.stacked_cols), dtype=np.complex128)
    for idx, ((r0, r1), (c0, c1), _src) in enumerate(_stacked_block_layout(top)):
        spec = FadingSpec(kind=CLARKE, doppler=doppler, entry_power=scenario.fading.entry_power)
        proc = FadingProcess(rng.split(idx), r1 - r0, c1 - c0, spec)
        h[:, r0:r1, c0:c1] = proc.sample_block(0, n)
    return h


def _genie_chunk(scenario: Scenario, lo: int, hi: int, noise_var: float,
                 doppler: float | None):
    """Known-symbol data for trials [lo, hi): inputs s (T,n,N), observations
    r (T,n,M), and the true effective channel (static (T,M,N) or (T,n,M,N))."""
    top = scenario.topology
    n, n_cols, m_rows = scenario.n_total, top.stacked_cols, top.stacked_rows
    count = hi - lo
    amp = amplification_matrix(top, scenario.amplification)
    s_seq = np.empty((count, n, n_cols), dtype=np.complex128)
    r_seq = np.empty((count, n, m_rows), dtype=np.complex128)
    time_varying = scenario.fading.kind == CLARKE
    h_true = (np.empty((count, n, m_rows, n_cols), dtype=np.complex128) if time_varying
              else np.empty((count, m_rows, n_cols), dtype=np.complex128))
    for i, trial in enumerate(range(lo, hi)):
        rng = RngStream(scenario.seed).split(trial)
        packet = make_packet(rng.split(_SUB_PACKET), n_cols, n, scenario.n_train)
        s_seq[i] = packet.symbols.T
        g = rng.split(_SUB_NOISE).generator()
        noise = np.sqrt(noise_var / 2.0) * (
            g.normal(size=(n, m_rows)) + 1j * g.normal(size=(n, m_rows))
        )
        if time_varying:
            h_t = _clarke_stacked(rng.split(_SUB_CHANNEL), scenario, doppler, n) @ amp
            h_true[i] = h_t
            r_seq[i] = np.einsum("lmn,ln->lm", h_t, s_seq[i]) + noise
        else:
            h_eff = draw_channels(rng.split(_SUB_CHANNEL), top,
                                  scenario.fading.entry_power).stacked() @ amp
            h_true[i] = h_eff
            r_seq[i] = s_seq[i] @ h_eff.T + noise
    return s_seq, r_seq, h_true


def _initial_gamma(spec: EstimatorSpec, scenario: Scenario, noise_var: float) -> float:
    """TVB start value: explicit gamma0, else the Eq. fixed point under the
    nominal channel energy (the destination knows the channel statistics)."""
    if spec.gamma0 is not None:
        return float(spec.gamma0)
    return float(np.sqrt(spec.alpha * scenario.nominal_channel_energy() * noise_var))


def _run_variant_batch(spec: EstimatorSpec, scenario: Scenario, s_seq, r_seq, h_true,
                       noise_var: float, collect_norms: bool):
    """Streaming estimator over a chunk of trials at once.

    Mirrors the scalar step functions in estimators.py exactly (same update
    expressions, same dead-zone semantics); equivalence is enforced by tests.
    """
    count, n, n_cols = s_seq.shape
    m_rows = r_seq.shape[2]
    time_varying = h_true.ndim == 4
    h_est = np.zeros((count, m_rows, n_cols), dtype=np.complex128)
    alg = spec.algorithm
    p_mat = None
    if alg in ("rls", "beacon"):
        p0 = RLS_P_SCALE if alg == "rls" else 1.0
        p_mat = np.tile(p0 * np.eye(n_cols, dtype=np.complex128), (count, 1, 1))
    if alg in ("sm-nlms", "beacon"):
        if spec.tvb:
            gamma = np.full(count, _initial_gamma(spec, scenario, noise_var))
        else:
            gamma = np.full(count, float(spec.gamma))
    updates = np.zeros(count)
    mse_raw = np.empty(n)
    mse_norm = np.empty(n)
    norms = np.empty((count, n)) if collect_norms else None
    if not time_varying:
        h0_energy = np.sum(np.abs(h_true) ** 2, axis=(1, 2))
    for t in range(n):
        s = s_seq[:, t, :]
        r = r_seq[:, t, :]
        e = r - np.einsum("tmn,tn->tm", h_est, s)
        e_norm = np.linalg.norm(e, axis=1)
        if collect_norms:
            norms[:, t] = e_norm
        if alg == "nlms":
            ss = np.real(np.einsum("tn,tn->t", s.conj(), s))
            mu = spec.step_size / ss
            h_est += mu[:, None, None] * e[:, :, None] * s.conj()[:, None, :]
            updates += 1.0
        elif alg == "sm-nlms":
            ss = np.real(np.einsum("tn,tn->t", s.conj(), s))
            upd = e_norm > gamma
            mu = np.where(upd, (1.0 - gamma / np.maximum(e_norm, 1e-300)) / ss, 0.0)
            h_est += mu[:, None, None] * e[:, :, None] * s.conj()[:, None, :]
            updates += upd
        elif alg == "rls":
            lam = spec.forgetting
            pi = np.einsum("tnk,tk->tn", p_mat, s)
            g_val = np.real(np.einsum("tn,tn->t", s.conj(), pi))
            if np.any(g_val <= 0):
                raise StateCorruptionError("s^H P s <= 0 in batched RLS")
            k = pi.conj() / (lam + g_val)[:, None]
            h_est += e[:, :, None] * k[:, None, :]
            p_new = p_mat - pi[:, :, None] * k[:, None, :]
            p_mat = 0.5 * (p_new + p_new.conj().transpose(0, 2, 1)) / lam
            updates += 1.0
        elif alg == "beacon":
            pi = np.einsum("tnk,tk->tn", p_mat, s)
            g_val = np.real(np.einsum("tn,tn->t", s.conj(), pi))
            if np.any(g_val <= 0):
                raise StateCorruptionError("s^H P s <= 0 in batched BEACON")
            upd = e_norm > gamma
            lam = np.where(upd, (e_norm / gamma - 1.0) / g_val, 0.0)
            k = pi.conj() / (1.0 + lam * g_val)[:, None]
            h_est += lam[:, None, None] * e[:, :, None] * k[:, None, :]
            p_mat = p_mat - lam[:, None, None] * pi[:, :, None] * k[:, None, :]
            p_mat = 0.5 * (p_mat + p_mat.conj().transpose(0, 2, 1))
            updates += upd
        else:
            raise ParameterError(f"streaming run cannot use {alg!r}")
        if alg in ("sm-nlms", "beacon") and spec.tvb:
            energy = np.sum(np.abs(h_est) ** 2, axis=(1, 2))
            gamma = (1.0 - spec.beta) * gamma + spec.beta * np.sqrt(
                spec.alpha * energy * noise_var
            )
        h_ref = h_true[:, t] if time_varying else h_true
        diff = np.sum(np.abs(h_ref - h_est) ** 2, axis=(1, 2))
        ref = np.sum(np.abs(h_ref) ** 2, axis=(1, 2)) if time_varying else h0_energy
        mse_raw[t] = np.sum(diff)
        mse_norm[t] = np.sum(diff / ref)
    out = {
        "updates": updates,
        "mse_raw_sum": mse_raw,
        "mse_norm_sum": mse_norm,
        "gamma_final": gamma.copy() if alg in ("sm-nlms", "beacon") else None,
    }
    if collect_norms:
        out["norms"] = norms
    return out


def _run_mmse_batch(scenario: Scenario, s_seq, r_seq, h_true, noise_var: float):
    """Reference curve: batch MMSE from the training block, flat over time."""
    from .estimators import mmse_batch

    count, n, _ = s_seq.shape
    top = scenario.topology
    corr = (scenario.fading.entry_power * top.destinations
            * np.eye(top.stacked_cols, dtype=np.complex128))
    mse_raw = np.zeros(n)
    mse_norm = np.zeros(n)
    for i in range(count):
        s_train = s_seq[i, : scenario.n_train, :].T
        r_train = r_seq[i, : scenario.n_train, :].T
        h_hat = mmse_batch(s_train, r_train, corr, noise_var, top.stacked_rows)
        h_ref = h_true[i] if h_true.ndim == 3 else h_true[i, 0]
        diff = float(np.sum(np.abs(h_ref - h_hat) ** 2))
        mse_raw += diff
        mse_norm += diff / float(np.sum(np.abs(h_ref) ** 2))
    return {
        "updates": np.zeros(count),
        "mse_raw_sum": mse_raw,
        "mse_norm_sum": mse_norm,
        "gamma_final": None,
    }


def _to_db(values: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(values, 1e-30))


def _streaming_run(scenario: Scenario, noise_var: float, doppler: float | None,
                   collect_norms: bool, threads: int | None):
    """All variants over all trials; returns per-variant reduced metrics."""

    def chunk_job(lo, hi):
        s_seq, r_seq, h_true = _genie_chunk(scenario, lo, hi, noise_var, doppler)
        results = {}
        for spec in scenario.variants:
            if spec.algorithm == "mmse":
                results[spec.label] = _run_mmse_batch(scenario, s_seq, r_seq, h_true, noise_var)
            else:
                results[spec.label] = _run_variant_batch(
                    spec, scenario, s_seq, r_seq, h_true, noise_var, collect_norms
                )
        return results

    partials = _map_chunks(chunk_job, scenario.trials, threads)
    reduced = {}
    for spec in scenario.variants:
        label = spec.label
        mse_raw = np.zeros(scenario.n_total)
        mse_norm = np.zeros(scenario.n_total)
        updates = []
        gamma_final = []
        norms = []
        for part in partials:                      # chunk-index order
            p = part[label]
            mse_raw += p["mse_raw_sum"]
            mse_norm += p["mse_norm_sum"]
            updates.append(p["updates"])
            if p["gamma_final"] is not None:
                gamma_final.append(p["gamma_final"])
            if collect_norms and "norms" in p:
                norms.append(p["norms"])
        entry = {
            "mse_raw": mse_raw / scenario.trials,
            "mse_norm": mse_norm / scenario.trials,
            "update_rate": float(np.concatenate(updates).mean() / scenario.n_total),
        }
        if gamma_final:
            entry["gamma_final"] = float(np.concatenate(gamma_final).mean())
        if norms:
            entry["norms"] = np.concatenate(norms, axis=0)
        reduced[label] = entry
    return reduced


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def _require_feed(scenario: Scenario, feed: str, runner: str):
    if scenario.feed != feed:
        raise ParameterError(
            f"{runner} runs with feed = {feed}; got {scenario.feed!r} "
            f"(the ber runner implements the decision-directed loop)"
        )


def _scenario_doppler(scenario: Scenario):
    return scenario.fading.doppler if scenario.fading.kind == CLARKE else None


def run_learning_curve(scenario: Scenario, threads: int | None = None) -> RunMetrics:
    """Trial-averaged channel MSE trajectory (raw and normalized dB) with the
    cumulative update rate per variant. A Clarke scenario with a doppler_grid
    runs once per rate, suffixing labels with the rate."""
    _require_feed(scenario, GENIE, "learning-curve")
    noise_var = scenario.noise_variance()
    dopplers = (scenario.doppler_grid
                if (scenario.fading.kind == CLARKE and scenario.doppler_grid)
                else (scenario.fading.doppler if scenario.fading.kind == CLARKE else None,))
    labels = []
    metrics = RunMetrics(kind="curve", labels=(), noise_var=noise_var,
                         iterations=np.arange(scenario.n_total))
    for doppler in dopplers:
        suffix = f"@fd{doppler:g}" if (doppler is not None and len(dopplers) > 1) else ""
        reduced = _streaming_run(scenario, noise_var, doppler, False, threads)
        for spec in scenario.variants:
            label = spec.label + suffix
            entry = reduced[spec.label]
            labels.append(label)
            metrics.mse_raw[label] = entry["mse_raw"]
            metrics.mse_db[label] = _to_db(entry["mse_norm"])
            metrics.update_rate[label] = entry["update_rate"]
            if spec.tvb and "gamma_final" in entry:
                metrics.final_gamma[label] = entry["gamma_final"]
    metrics.labels = tuple(labels)
    metrics.info["feed"] = scenario.feed
    return metrics


def run_mse_vs_snr(scenario: Scenario, threads: int | None = None) -> RunMetrics:
    """Steady-state MSE (mean over the final half of the learning curve) per
    SNR grid point, for every variant."""
    _require_feed(scenario, GENIE, "mse-vs-snr")
    if not scenario.snr_grid_db:
        raise ParameterError("scenario needs a nonempty snr_grid_db")
    grid = np.asarray(scenario.snr_grid_db, dtype=float)
    labels = tuple(v.label for v in scenario.variants)
    metrics = RunMetrics(kind="mse-vs-snr", labels=labels, snr_grid_db=grid)
    steady = {label: [] for label in labels}
    urate = {label: [] for label in labels}
    for snr in grid:
        noise_var = scenario.noise_variance(snr)
        reduced = _streaming_run(scenario, noise_var, _scenario_doppler(scenario),
                                 False, threads)
        half = scenario.n_total // 2
        for label in labels:
            entry = reduced[label]
            steady[label].append(float(np.mean(_to_db(entry["mse_norm"])[half:])))
            urate[label].append(entry["update_rate"])
    for label in labels:
        metrics.steady_mse_db[label] = np.asarray(steady[label])
        metrics.update_rate[label] = np.asarray(urate[label])
    return metrics


def run_analysis_validation(scenario: Scenario, threads: int | None = None) -> RunMetrics:
    """Per bound-grid point: analytical vs empirical steady-state update
    probability and simulated vs semi-analytical excess MSE for both
    set-membership estimators. The x axis gamma^2 / (M sigma_n^2) is emitted
    alongside gamma."""
    _require_feed(scenario, GENIE, "validate-analysis")
    if not scenario.gamma_grid:
        raise ParameterError("scenario needs a nonempty gamma_grid")
    noise_var = scenario.noise_variance()
    m_rows = scenario.topology.stacked_rows
    grid = np.asarray(scenario.gamma_grid, dtype=float)
    cols = {name: [] for name in (
        "pup_analytic_smnlms", "pup_empirical_smnlms", "jex_sim_smnlms", "jex_semi_smnlms",
        "pup_analytic_beacon", "pup_empirical_beacon", "jex_sim_beacon", "jex_semi_beacon",
    )}
    not_steady = []
    half = scenario.n_total // 2
    for gamma in grid:
        sweep = replace(
            scenario,
            variants=(
                EstimatorSpec("sm-nlms", gamma=float(gamma)),
                EstimatorSpec("beacon", gamma=float(gamma)),
            ),
        )
        reduced = _streaming_run(sweep, noise_var, _scenario_doppler(scenario),
                                 True, threads)
        for alg, key in (("sm-nlms", "smnlms"), ("beacon", "beacon")):
            entry = reduced[f"{alg}-g{gamma:g}"]
            power_db = _to_db(np.mean(entry["norms"] ** 2, axis=0))
            _, slope, settled = ana.steady_state_window(power_db)
            if not settled:
                not_steady.append(f"{alg}-g{gamma:g} (slope {slope:.2e} dB/it)")
            window = entry["norms"][:, half:].ravel()
            moments = ana.collect_moments(window, float(gamma))
            sigma_ana = (ana.sigma_inflation_for_smnlms(noise_var)
                         if alg == "sm-nlms" else noise_var)
            cols[f"pup_analytic_{key}"].append(
                ana.p_update_analytical(float(gamma), sigma_ana, m_rows))
            cols[f"pup_empirical_{key}"].append(moments.p_update)
            cols[f"jex_sim_{key}"].append(float(np.mean(window**2)) - m_rows * noise_var)
            cols[f"jex_semi_{key}"].append(
                ana.excess_mse_steady(moments, float(gamma), noise_var, m_rows))
    metrics = RunMetrics(kind="validate-analysis",
                         labels=("sm-nlms", "beacon"), noise_var=noise_var,
                         gamma_grid=grid)
    metrics.analysis = {name: np.asarray(vals) for name, vals in cols.items()}
    metrics.analysis["gamma_sq_norm"] = grid**2 / (m_rows * noise_var)
    metrics.info["steady_window"] = f"final {scenario.n_total - half} of {scenario.n_total}"
    if not_steady:
        metrics.info["not_steady"] = "; ".join(not_steady)
    return metrics


def run_ber(scenario: Scenario, threads: int | None = None) -> RunMetrics:
    """Bit error rate of the source streams under LMMSE detection with the
    evolving channel estimate, per SNR point, decision-directed after the
    training preamble. Includes a perfect-CSI reference curve."""
    _require_feed(scenario, DECISION_DIRECTED, "ber")
    if not scenario.snr_grid_db:
        raise ParameterError("scenario needs a nonempty snr_grid_db")
    if scenario.n_total <= scenario.n_train:
        raise ParameterError("BER needs data symbols (n_total > n_train)")
    grid = np.asarray(scenario.snr_grid_db, dtype=float)
    labels = tuple(v.label for v in scenario.variants) + (GENIE,)
    n_data = scenario.n_total - scenario.n_train
    bits_per_packet = 2 * n_data * scenario.topology.sources
    metrics = RunMetrics(kind="ber", labels=labels, snr_grid_db=grid,
                         ber_bits_per_packet=bits_per_packet)
    for label in labels:
        metrics.ber_packet_errors[label] = np.zeros((grid.size, scenario.trials), dtype=np.int64)
    for gi, snr in enumerate(grid):
        noise_var = scenario.noise_variance(snr)

        def chunk_job(lo, hi, _noise=noise_var):
            return _ber_chunk(scenario, lo, hi, _noise)

        partials = _map_chunks(chunk_job, scenario.trials, threads)
        for label in labels:
            metrics.ber_packet_errors[label][gi] = np.concatenate(
                [p[label] for p in partials])
    for label in labels:
        errs = metrics.ber_packet_errors[label]
        metrics.ber[label] = errs.sum(axis=1) / (bits_per_packet * scenario.trials)
    metrics.info["feed"] = DECISION_DIRECTED
    return metrics


def _ber_chunk(scenario: Scenario, lo: int, hi: int, noise_var: float):
    """Decision-directed BER for packets [lo, hi) at one noise level."""
    top = scenario.topology
    n, n_train = scenario.n_total, scenario.n_train
    n_data = n - n_train
    count = hi - lo
    m_rows, n_cols, n_src = top.stacked_rows, top.stacked_cols, top.sources
    amp = amplification_matrix(top, scenario.amplification)

    h_eff = np.empty((count, m_rows, n_cols), dtype=np.complex128)
    cascade = np.empty((count, n_cols, n_src), dtype=np.complex128)
    pilots = np.empty((count, n_train, n_cols), dtype=np.complex128)
    src_bits = np.empty((count, n_data, n_src, 2), dtype=np.int64)
    src_syms = np.empty((count, n_data, n_src), dtype=np.complex128)
    noise = np.empty((count, n, m_rows), dtype=np.complex128)
    for i, trial in enumerate(range(lo, hi)):
        rng = RngStream(scenario.seed).split(trial)
        channels = draw_channels(rng.split(_SUB_CHANNEL), top, scenario.fading.entry_power)
        h_eff[i] = channels.stacked() @ amp
        cascade[i] = channels.cascade(amp)
        pilots[i] = make_packet(rng.split(_SUB_PACKET), n_cols, n_train, n_train).symbols.T
        src = make_packet(rng.split(_SUB_SOURCE), n_src, n_data, 1)
        src_bits[i] = src.bits.transpose(1, 0, 2)
        src_syms[i] = src.symbols.T
        g = rng.split(_SUB_NOISE).generator()
        noise[i] = np.sqrt(noise_var / 2.0) * (
            g.normal(size=(n, m_rows)) + 1j * g.normal(size=(n, m_rows)))

    h_total = np.einsum("tmn,tnk->tmk", h_eff, cascade)
    r_train = np.einsum("tmn,tln->tlm", h_eff, pilots) + noise[:, :n_train]
    r_data = np.einsum("tmk,tlk->tlm", h_total, src_syms) + noise[:, n_train:]
    eye_k = np.eye(n_src, dtype=np.complex128)

    def detect(h_tot_hat, r):
        # K x K Wiener form, identical to (H H^H + s2 I)^-1 H for unit-power
        # symbols and well posed in the zero-noise (zero-forcing) limit
        gram = (np.einsum("tmk,tmq->tkq", h_tot_hat.conj(), h_tot_hat)
                + noise_var * eye_k)
        rhs = np.einsum("tmk,tm->tk", h_tot_hat.conj(), r)
        return np.linalg.solve(gram, rhs[..., None])[..., 0]

    errors = {}
    # perfect-CSI reference: constant weights per packet
    gram = np.einsum("tmk,tmq->tkq", h_total.conj(), h_total) + noise_var * eye_k
    rhs = np.einsum("tmk,tlm->tlk", h_total.conj(), r_data)
    soft = np.linalg.solve(gram[:, None], rhs[..., None])[..., 0]
    errors[GENIE] = np.sum(qpsk_demod(soft) != src_bits, axis=(1, 2, 3)).astype(np.int64)

    for spec in scenario.variants:
        if spec.algorithm == "mmse":
            raise ParameterError("mmse reference is not a streaming BER variant")
        h_est = np.zeros((count, m_rows, n_cols), dtype=np.complex128)
        p_mat = None
        if spec.algorithm in ("rls", "beacon"):
            p0 = RLS_P_SCALE if spec.algorithm == "rls" else 1.0
            p_mat = np.tile(p0 * np.eye(n_cols, dtype=np.complex128), (count, 1, 1))
        gamma = None
        if spec.algorithm in ("sm-nlms", "beacon"):
            gamma = np.full(count, _initial_gamma(spec, scenario, noise_var)
                            if spec.tvb else float(spec.gamma))
        state = dict(h=h_est, p=p_mat, gamma=gamma)

        for t in range(n_train):
            _ber_step(spec, state, pilots[:, t, :], r_train[:, t, :], noise_var, scenario)
        errs = np.zeros(count, dtype=np.int64)
        for t in range(n_data):
            h_tot_hat = np.einsum("tmn,tnk->tmk", state["h"], cascade)
            soft = detect(h_tot_hat, r_data[:, t, :])
            bits_hat = qpsk_demod(soft)
            errs += np.sum(bits_hat != src_bits[:, t], axis=(1, 2))
            feed = np.einsum("tnk,tk->tn", cascade, qpsk_slice(soft))
            _ber_step(spec, state, feed, r_data[:, t, :], noise_var, scenario)
        errors[spec.label] = errs
    return errors


def _ber_step(spec: EstimatorSpec, state: dict, s, r, noise_var: float,
              scenario: Scenario):
    """One batched estimator step inside the decision-directed loop."""
    h_est = state["h"]
    e = r - np.einsum("tmn,tn->tm", h_est, s)
    e_norm = np.linalg.norm(e, axis=1)
    if spec.algorithm == "nlms":
        ss = np.real(np.einsum("tn,tn->t", s.conj(), s))
        mu = spec.step_size / ss
        h_est += mu[:, None, None] * e[:, :, None] * s.conj()[:, None, :]
    elif spec.algorithm == "sm-nlms":
        ss = np.real(np.einsum("tn,tn->t", s.conj(), s))
        upd = e_norm > state["gamma"]
        mu = np.where(upd, (1.0 - state["gamma"] / np.maximum(e_norm, 1e-300)) / ss, 0.0)
        h_est += mu[:, None, None] * e[:, :, None] * s.conj()[:, None, :]
    elif spec.algorithm == "rls":
        lam = spec.forgetting
        pi = np.einsum("tnk,tk->tn", state["p"], s)
        g_val = np.real(np.einsum("tn,tn->t", s.conj(), pi))
        k = pi.conj() / (lam + g_val)[:, None]
        h_est += e[:, :, None] * k[:, None, :]
        p_new = state["p"] - pi[:, :, None] * k[:, None, :]
        state["p"] = 0.5 * (p_new + p_new.conj().transpose(0, 2, 1)) / lam
    elif spec.algorithm == "beacon":
        pi = np.einsum("tnk,tk->tn", state["p"], s)
        g_val = np.real(np.einsum("tn,tn->t", s.conj(), pi))
        upd = e_norm > state["gamma"]
        lam = np.where(upd, (e_norm / state["gamma"] - 1.0) / g_val, 0.0)
        k = pi.conj() / (1.0 + lam * g_val)[:, None]
        h_est += lam[:, None, None] * e[:, :, None] * k[:, None, :]
        p_new = state["p"] - lam[:, None, None] * pi[:, :, None] * k[:, None, :]
        state["p"] = 0.5 * (p_new + p_new.conj().transpose(0, 2, 1))
    if spec.algorithm in ("sm-nlms", "beacon") and spec.tvb:
        energy = np.sum(np.abs(h_est) ** 2, axis=(1, 2))
        state["gamma"] = ((1.0 - spec.beta) * state["gamma"]
                          + spec.beta * np.sqrt(spec.alpha * energy * noise_var))


def run_complexity_table(sizes=None, p_updates=None) -> RunMetrics:
    """Arithmetic complexity per time instant over an (M, N, P_up) grid,
    including the BEACON-vs-RLS multiplication crossover probability."""
    if sizes is None:
        sizes = [(k, k) for k in range(2, 42, 2)]   # square grid as in the count figure
    if p_updates is None:
        p_updates = (0.1, 0.25, 0.5, 0.75, 1.0)
    rows = {name: [] for name in
            ("M", "N", "p_update",
             "nlms_mult", "nlms_add", "nlms_div",
             "sm_nlms_mult", "sm_nlms_add", "sm_nlms_div",
             "rls_mult", "rls_add", "rls_div",
             "beacon_mult", "beacon_add", "beacon_div",
             "beacon_rls_crossover_p")}
    for m, n in sizes:
        for p in p_updates:
            counts = {alg: ana.complexity_per_update(alg, m, n, p)
                      for alg in ("nlms", "sm-nlms", "rls", "beacon")}
            rows["M"].append(m)
            rows["N"].append(n)
            rows["p_update"].append(p)
            for alg, prefix in (("nlms", "nlms"), ("sm-nlms", "sm_nlms"),
                                ("rls", "rls"), ("beacon", "beacon")):
                rows[f"{prefix}_mult"].append(counts[alg].multiplications)
                rows[f"{prefix}_add"].append(counts[alg].additions)
                rows[f"{prefix}_div"].append(counts[alg].divisions)
            rows["beacon_rls_crossover_p"].append(ana.beacon_rls_crossover(m, n))
    metrics = RunMetrics(kind="complexity", labels=("nlms", "sm-nlms", "rls", "beacon"))
    metrics.table = {name: np.asarray(vals, dtype=float) for name, vals in rows.items()}
    return metrics


# ---------------------------------------------------------------------------
# CSV / metadata output
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.10g}"


def write_csv(path, header, columns, monotone_x: bool = True):
    """Write columns and run the self-validation pass (consistent widths,
    finite values, monotone leading column)."""
    columns = [np.asarray(c, dtype=float) for c in columns]
    if len(header) != len(columns):
        raise CsvValidationError(f"{len(header)} names for {len(columns)} columns")
    length = columns[0].size
    if any(c.size != length for c in columns):
        raise CsvValidationError("columns have unequal lengths")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(length):
            fh.write(",".join(_fmt(c[i]) for c in columns) + "\n")
    validate_csv(path, monotone_x=monotone_x)


def validate_csv(path, monotone_x: bool = True):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 2:
        raise CsvValidationError(f"{path}: no data rows")
    width = len(lines[0].split(","))
    data = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != width:
            raise CsvValidationError(f"{path}: ragged row {ln!r}")
        row = [float(p) for p in parts]
        if not all(np.isfinite(v) for v in row):
            raise CsvValidationError(f"{path}: non-finite value in {ln!r}")
        data.append(row)
    if monotone_x:
        x = [row[0] for row in data]
        if any(b < a for a, b in zip(x, x[1:])):
            raise CsvValidationError(f"{path}: leading column not monotone")


def scenario_metadata(scenario: Scenario) -> dict:
    top = scenario.topology
    meta = {
        "hops": top.hops,
        "sources": top.sources,
        "destinations": top.destinations,
        "relay_counts": " ".join(str(c) for c in top.relay_counts),
        "stacked_rows_M": top.stacked_rows,
        "stacked_cols_N": top.stacked_cols,
        "fading_kind": scenario.fading.kind,
        "doppler": scenario.fading.doppler,
        "entry_power": scenario.fading.entry_power,
        "snr_db": scenario.snr_db,
        "snr_ref_power": scenario.snr_ref_power,
        "noise_var_at_snr_db": scenario.noise_variance(),
        "n_total": scenario.n_total,
        "n_train": scenario.n_train,
        "trials": scenario.trials,
        "seed": scenario.seed,
        "feed": scenario.feed,
        "amplification": scenario.amplification,
        "variants": " | ".join(v.label for v in scenario.variants),
    }
    if scenario.snr_grid_db:
        meta["snr_grid_db"] = " ".join(f"{s:g}" for s in scenario.snr_grid_db)
    if scenario.gamma_grid:
        meta["gamma_grid"] = " ".join(f"{g:g}" for g in scenario.gamma_grid)
    if scenario.doppler_grid:
        meta["doppler_grid"] = " ".join(f"{d:g}" for d in scenario.doppler_grid)
    return meta


def write_meta(path, mapping: dict):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in mapping.items():
            fh.write(f"{key} = {value}\n")


def save_metrics(metrics: RunMetrics, outdir, name: str,
                 scenario: Scenario | None = None) -> str:
    """Write {name}.csv (+ {name}.meta) under outdir; returns the CSV path."""
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, f"{name}.csv")
    meta = dict(scenario_metadata(scenario)) if scenario is not None else {}
    meta["kind"] = metrics.kind
    from . import __version__
    meta["artifact_version"] = __version__
    if metrics.kind == "curve":
        header = ["iteration"]
        cols = [metrics.iterations]
        for label in metrics.labels:
            header += [f"{label}_mse_db", f"{label}_mse_raw"]
            cols += [metrics.mse_db[label], metrics.mse_raw[label]]
            meta[f"update_rate[{label}]"] = _fmt(metrics.update_rate[label])
            if label in metrics.final_gamma:
                meta[f"final_gamma[{label}]"] = _fmt(metrics.final_gamma[label])
    elif metrics.kind == "mse-vs-snr":
        header = ["snr_db"]
        cols = [metrics.snr_grid_db]
        for label in metrics.labels:
            header += [f"{label}_steady_mse_db", f"{label}_update_rate"]
            cols += [metrics.steady_mse_db[label], metrics.update_rate[label]]
    elif metrics.kind == "ber":
        header = ["snr_db"]
        cols = [metrics.snr_grid_db]
        for label in metrics.labels:
            header.append(f"{label}_ber")
            cols.append(metrics.ber[label])
        meta["bits_per_packet"] = metrics.ber_bits_per_packet
    elif metrics.kind == "validate-analysis":
        header = ["gamma", "gamma_sq_norm"]
        cols = [metrics.gamma_grid, metrics.analysis["gamma_sq_norm"]]
        for key in sorted(metrics.analysis):
            if key == "gamma_sq_norm":
                continue
            header.append(key)
            cols.append(metrics.analysis[key])
    elif metrics.kind == "complexity":
        header = list(metrics.table)
        cols = [metrics.table[k] for k in header]
    else:
        raise ParameterError(f"unknown metrics kind {metrics.kind!r}")
    for key, value in metrics.info.items():
        meta[f"info[{key}]"] = value
    if metrics.noise_var is not None:
        meta["noise_var"] = _fmt(metrics.noise_var)
    write_csv(csv_path, header, cols, monotone_x=(metrics.kind != "complexity"))
    write_meta(os.path.join(outdir, f"{name}.meta"), meta)
    return csv_path
