"""End-to-end frame simulation and recovery."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import security
from .channel import ChannelParams, propagate
from .core import SystemConfig, derive_stream, validate_config
from .recovery import (RecoveredSymbols, SyncResult, align_reference, baseband_reference,
                       branch_scores, demodulate_symbols, downconvert_filter, estimate_phases,
                       normalize_snu, receive_taps, rotate, synchronize)
from .relay import CalibrationRecord, RelayRecord, acquire_calibration, bsm_mix, dual_homodyne
from .transmitter import PARTIES, SymbolBlock, generate_symbols, if_sign, modulate


class StageError(RuntimeError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass(frozen=True, eq=False)
class SimulatedFrame:
    index: int
    alpha: SymbolBlock
    beta: SymbolBlock
    record: RelayRecord
    phase0: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class FrameResult:
    index: int
    alpha: SymbolBlock          # aligned and phase-corrected
    beta: SymbolBlock
    gamma: RecoveredSymbols     # SNU-normalized
    sync: SyncResult
    theta: dict
    branch: tuple[float, float]
    fit: security.RelayFit


@dataclass(frozen=True, eq=False)
class RunResult:
    config: SystemConfig
    calibration: CalibrationRecord
    frames: list
    fit: security.RelayFit
    summary: dict
    timing: dict


def _stream(cfg: SystemConfig, frame: int, label: str) -> np.random.Generator:
    return derive_stream(cfg.master_seed, f"frame-{frame}/{label}")


def channel_params(cfg: SystemConfig, party: str, phase0: float = 0.0) -> ChannelParams:
    i = PARTIES.index(party)
    return ChannelParams(
        transmittance=(cfg.transmittance_alice, cfg.transmittance_bob)[i],
        excess_noise_inject=(cfg.excess_noise_inject_a, cfg.excess_noise_inject_b)[i],
        delay=cfg.delays[i],
        linewidth=cfg.drift_linewidth,
        phase0=phase0,
        freq_offset=cfg.freq_offset if party == "alice" else 0.0,
    )


def simulate_frame(cfg: SystemConfig, k: int, noiseless: bool = False,
                   phase0: dict | None = None) -> SimulatedFrame:
    """Both transmitters, both arms and the relay detectors for frame ``k``.

    Each arm starts at a random static phase unless ``phase0`` fixes it.
    ``noiseless`` disables every noise source and the drift.
    """
    fixed = phase0 or {}
    taps = receive_taps(cfg)
    blocks = {}
    arrived = {}
    phases = {}
    for party, var in (("alice", cfg.v_alice), ("bob", cfg.v_bob)):
        blocks[party] = generate_symbols(cfg.symbols_per_frame, var,
                                         _stream(cfg, k, f"{party}/symbols"), party, k)
        drawn = float(_stream(cfg, k, f"{party}/phase0").uniform(-np.pi, np.pi))
        phases[party] = float(fixed.get(party, drawn))
        rng = None if noiseless else _stream(cfg, k, f"{party}/channel")
        arrived[party] = propagate(modulate(blocks[party], cfg, taps),
                                   channel_params(cfg, party, phases[party]), rng,
                                   taps=taps, if_freq=if_sign(party) * cfg.if_freq)
    c, d = bsm_mix(arrived["alice"], arrived["bob"])
    rng = None if noiseless else _stream(cfg, k, "relay/detectors")
    rec = dual_homodyne(c, d, cfg.eta, cfg.shot_psd, cfg.elec_noise * cfg.shot_psd, rng,
                        frame_index=k)
    return SimulatedFrame(k, blocks["alice"], blocks["bob"], rec, phases)


def recover_frame(frame: SimulatedFrame, cal: CalibrationRecord, cfg: SystemConfig) -> FrameResult:
    """Receiver DSP for one frame; failures are reported with their stage name."""
    def stage(name, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise StageError(name, exc) from exc

    bb = stage("downconvert", downconvert_filter, frame.record, cfg)
    refs = {"alice": baseband_reference(frame.alpha, cfg), "bob": baseband_reference(frame.beta, cfg)}
    sync = stage("sync", synchronize, refs, bb)
    gamma = stage("demodulate", demodulate_symbols, bb, sync, cfg, frame.index)
    gamma = stage("normalize", normalize_snu, gamma, cal)
    alpha = stage("align", align_reference, frame.alpha, sync, cfg)
    beta = stage("align", align_reference, frame.beta, sync, cfg)
    branch = branch_scores(beta, gamma)
    if not branch[1] > branch[0]:
        raise StageError("phase", RuntimeError("Bob's symbols correlate with gamma, not conj(gamma)"))
    est = stage("phase", estimate_phases, alpha, beta, gamma)
    alpha = rotate(alpha, est["alice"].theta)
    beta = rotate(beta, est["bob"].theta)
    fit = stage("fit", security.fit_relay_model, alpha, beta, gamma)
    return FrameResult(frame.index, alpha, beta, gamma, sync,
                       {p: e.theta for p, e in est.items()}, branch, fit)


def process_frame(cfg: SystemConfig, k: int, cal: CalibrationRecord) -> FrameResult:
    try:
        frame = simulate_frame(cfg, k)
    except Exception as exc:  # noqa: BLE001
        raise StageError("simulate", exc) from exc
    return recover_frame(frame, cal, cfg)


def _worker(args):
    cfg, k, cal = args
    return process_frame(cfg, k, cal)


def run_simulation(cfg: SystemConfig, workers: int = 1, frames: int | None = None) -> RunResult:
    """Calibrate once, process every frame, pool the fits and compute key rates.

    Results do not depend on ``workers``: every frame draws from its own
    seed-derived streams and frames are collected in index order.
    """
    validate_config(cfg)
    n = cfg.frames if frames is None else frames
    t0 = time.perf_counter()
    try:
        cal = acquire_calibration(cfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("calibrate", exc) from exc
    t1 = time.perf_counter()
    jobs = [(cfg, k, cal) for k in range(n)]
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    t2 = time.perf_counter()
    try:
        fit, _ = security.pool_fits([(r.alpha, r.beta, r.gamma) for r in results])
        summary = security.key_rate_summary(fit, cfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("keyrate", exc) from exc
    t3 = time.perf_counter()
    timing = dict(calibration_s=t1 - t0, frames_s=t2 - t1, keyrate_s=t3 - t2, workers=workers)
    return RunResult(cfg, cal, results, fit, summary, timing)
