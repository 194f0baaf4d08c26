"""Parameter estimation and asymptotic key rate for the CV-MDI link.

Covariance matrices use (q1, p1, q2, p2, ...) ordering in SNU (vacuum = identity).
Two key-rate backends are available:

``conditional-cm``
    Entanglement-based model of both arms and the relay; the retained modes
    are conditioned on the public outcome and both the mutual information
    and Eve's Holevo information are computed from the conditional state.
``equivalent-oneway``
    The fitted linear channel of the reference party read as a one-way
    thermal-loss channel whose excess noise also includes the relay's vacuum
    unit (conceded to Eve). Pessimistic; kept as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SystemConfig, generative_xi
from .recovery import RecoveredSymbols
from .transmitter import SymbolBlock

BACKENDS = ("conditional-cm", "equivalent-oneway")
DIRECTIONS = ("bob-infers", "alice-infers")
SPLIT_SCAN = (0.0, 0.25, 0.5, 0.75, 1.0)
MIN_FIT_SAMPLES = 1000


class UnphysicalStateError(ValueError):
    pass


# --- Gaussian state machinery ------------------------------------------------------

def omega(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(m) -> np.ndarray:
    """Symplectic spectrum (ascending, one value per mode)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise ValueError("covariance matrix must be square with even dimension")
    if not np.allclose(m, m.T, rtol=0, atol=1e-9 * max(1.0, np.abs(m).max())):
        raise ValueError("covariance matrix must be symmetric")
    n = m.shape[0] // 2
    ev = np.sort(np.abs(np.linalg.eigvals(1j * omega(n) @ m)))
    return ev[::2]


def von_neumann_g(nu: float) -> float:
    """Entropy (bits) of a thermal mode with symplectic eigenvalue ``nu``."""
    if nu < 1 - 1e-9:
        raise ValueError(f"symplectic eigenvalue {nu} < 1 is unphysical")
    if nu <= 1:
        return 0.0
    a = (nu + 1) / 2
    b = (nu - 1) / 2
    return a * math.log2(a) - b * math.log2(b)


def entropy(m) -> float:
    return float(sum(von_neumann_g(nu) for nu in symplectic_eigenvalues(m)))


def tmsv_cm(mu: float) -> np.ndarray:
    """Two-mode squeezed vacuum with local variance ``mu``."""
    c = math.sqrt(max(mu * mu - 1, 0.0))
    z = np.diag([1.0, -1.0])
    i2 = np.eye(2)
    return np.block([[mu * i2, c * z], [c * z, mu * i2]])


def _idx(mode: int) -> list[int]:
    return [2 * mode, 2 * mode + 1]


def relay_cm(v_a, v_b, tau_a, tau_b, eps_a, eps_b) -> np.ndarray:
    """Modes (A0, B0, C, D): retained halves and the two beamsplitter outputs before detection."""
    for name, t in (("tau_a", tau_a), ("tau_b", tau_b)):
        if not 0 <= t <= 1:
            raise ValueError(f"{name} must be in [0, 1]")
    if v_a < 0 or v_b < 0 or eps_a < 0 or eps_b < 0:
        raise ValueError("variances and excess noise must be >= 0")
    # order A0, A, B0, B
    m = np.zeros((8, 8))
    m[:4, :4] = tmsv_cm(v_a + 1)
    m[4:, 4:] = tmsv_cm(v_b + 1)
    for mode, tau, eps in ((1, tau_a, eps_a), (3, tau_b, eps_b)):
        s = np.eye(8)
        s[_idx(mode), _idx(mode)] = math.sqrt(tau)
        m = s @ m @ s.T
        m[_idx(mode), _idx(mode)] += 1 - tau + eps
    # C = (A - B)/sqrt2, D = (A + B)/sqrt2, then reorder to A0, B0, C, D
    bs = np.eye(8)
    r = 1 / math.sqrt(2)
    for q in (0, 1):
        a, b = 2 + q, 6 + q
        bs[a, a], bs[a, b], bs[b, a], bs[b, b] = r, -r, r, r
    m = bs @ m @ bs.T
    order = [0, 1, 4, 5, 2, 3, 6, 7]
    return m[np.ix_(order, order)]


def conditional_cm(v_a, v_b, tau_a, tau_b, eps_a, eps_b) -> np.ndarray:
    """CM of (A0, B0) given the relay outcome (X of C, P of D)."""
    full = relay_cm(v_a, v_b, tau_a, tau_b, eps_a, eps_b)
    keep = [0, 1, 2, 3]
    meas = [4, 7]
    k = full[np.ix_(keep, keep)]
    c = full[np.ix_(keep, meas)]
    mm = full[np.ix_(meas, meas)]
    out = k - c @ np.linalg.solve(mm, c.T)
    out = (out + out.T) / 2
    if symplectic_eigenvalues(out)[0] < 1 - 1e-6:
        raise UnphysicalStateError("conditional state violates the uncertainty principle")
    return out


def heterodyne_condition(m, mode: int) -> np.ndarray:
    """CM of the remaining modes after heterodyning ``mode``."""
    m = np.asarray(m, dtype=float)
    meas = _idx(mode)
    rest = [i for i in range(m.shape[0]) if i not in meas]
    a = m[np.ix_(rest, rest)]
    c = m[np.ix_(rest, meas)]
    b = m[np.ix_(meas, meas)]
    out = a - c @ np.linalg.solve(b + np.eye(2), c.T)
    return (out + out.T) / 2


def _reference_mode(direction: str) -> int:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    # bob-infers: Alice's variable is the key (mode A0); alice-infers: Bob's (B0)
    return 0 if direction == "bob-infers" else 1


def holevo_mdi(cm, direction: str = "bob-infers") -> float:
    """Eve's Holevo information on the reference party's heterodyne outcome."""
    ref = _reference_mode(direction)
    return entropy(cm) - entropy(heterodyne_condition(cm, ref))


def conditional_mutual_information(cm, direction: str = "bob-infers") -> float:
    """I between the two parties' heterodyne outcomes, given the relay outcome."""
    ref = _reference_mode(direction)
    other = 1 - ref
    v = np.asarray(cm)[np.ix_(_idx(other), _idx(other))] + np.eye(2)
    v_cond = heterodyne_condition(cm, ref) + np.eye(2)
    return 0.5 * math.log2(np.linalg.det(v) / np.linalg.det(v_cond))


def mutual_information(v: float, t2: float, xi: float) -> float:
    """log2(1 + SNR), SNR = t2*v/(1 + xi), counting both quadratures."""
    snr = t2 * v / (1 + xi)
    return math.log2(1 + snr)


def oneway_holevo(v: float, transmittance: float, eps: float) -> float:
    """Eve's entangling-cloner information on the sender's heterodyne outcome."""
    m = tmsv_cm(v + 1)
    s = np.diag([1.0, 1.0, math.sqrt(transmittance), math.sqrt(transmittance)])
    m = s @ m @ s.T
    m[2:, 2:] += (1 - transmittance + transmittance * eps) * np.eye(2)
    return entropy(m) - entropy(heterodyne_condition(m, 0))


# --- parameter estimation ---------------------------------------------------------------

@dataclass(frozen=True)
class RelayFit:
    tau_a: float
    tau_b: float
    xi_x: float
    xi_p: float
    xi_per_frame: list = field(default_factory=list)
    t_a: tuple = (float("nan"), float("nan"))
    t_b: tuple = (float("nan"), float("nan"))
    n_symbols: float = float("inf")
    xi_stderr: float = 0.0

    @property
    def xi(self) -> float:
        return (self.xi_x + self.xi_p) / 2

    @property
    def xi_mean(self) -> float:
        """Mean over frames and quadratures (pooled value when there are no frames)."""
        if not self.xi_per_frame:
            return self.xi
        return float(np.mean([(x + p) / 2 for x, p in self.xi_per_frame]))

    @property
    def xi_negative(self) -> bool:
        return self.xi < 0

    @property
    def xi_significantly_negative(self) -> bool:
        return self.xi < -3 * self.xi_stderr


def fit_relay_model(alpha: SymbolBlock, beta: SymbolBlock, gamma: RecoveredSymbols,
                    per_frame: list | None = None) -> RelayFit:
    """Least-squares linear model of gamma on alpha and conj(beta), one per quadrature.

    Both couplings are fitted jointly so the sample cross-covariance of the two
    independent modulations does not leak into the noise estimate.
    """
    a = np.asarray(alpha.symbols)
    c = np.conj(np.asarray(beta.symbols))
    g = np.asarray(gamma.gamma)
    n = len(g)
    if not len(a) == len(c) == n:
        raise ValueError("alpha, beta and gamma must be aligned")
    if n < MIN_FIT_SAMPLES:
        raise ValueError(f"need at least {MIN_FIT_SAMPLES} symbols, got {n}")
    coef = []
    xi = []
    for part in (np.real, np.imag):
        y = part(g) - part(g).mean()
        x = np.column_stack([part(a) - part(a).mean(), part(c) - part(c).mean()])
        sol, *_ = np.linalg.lstsq(x, y, rcond=None)
        resid = y - x @ sol
        xi.append(float(resid @ resid / (n - 3)) - 1.0)
        coef.append(sol)
    t_a = (float(coef[0][0]), float(coef[1][0]))
    t_b = (float(coef[0][1]), float(coef[1][1]))
    xi_x, xi_p = xi
    stderr = (1 + (xi_x + xi_p) / 2) * math.sqrt(2 / n) / math.sqrt(2)
    frames = per_frame if per_frame is not None else [(xi_x, xi_p)]
    return RelayFit(tau_a=t_a[0] ** 2 + t_a[1] ** 2, tau_b=t_b[0] ** 2 + t_b[1] ** 2,
                    xi_x=xi_x, xi_p=xi_p, xi_per_frame=list(frames), t_a=t_a, t_b=t_b,
                    n_symbols=n, xi_stderr=stderr)


def pool_fits(frames) -> tuple[RelayFit, list[RelayFit]]:
    """Fit each (alpha, beta, gamma) frame and the concatenation of all of them."""
    frames = list(frames)
    fits = [fit_relay_model(a, b, g) for a, b, g in frames]
    a_all = frames[0][0].with_symbols(np.concatenate([f[0].symbols for f in frames]))
    b_all = frames[0][1].with_symbols(np.concatenate([f[1].symbols for f in frames]))
    g_all = RecoveredSymbols(np.concatenate([f[2].gamma for f in frames]), -1,
                             frames[0][2].snu_scale_used, frames[0][2].chain_id)
    pooled = fit_relay_model(a_all, b_all, g_all, per_frame=[(f.xi_x, f.xi_p) for f in fits])
    return pooled, fits


def analytic_fit(cfg: SystemConfig) -> RelayFit:
    """The fit an infinitely long run would return for ``cfg``."""
    tau_a = cfg.eta * cfg.transmittance_alice
    tau_b = cfg.eta * cfg.transmittance_bob
    xi = generative_xi(cfg)
    return RelayFit(tau_a=tau_a, tau_b=tau_b, xi_x=xi, xi_p=xi,
                    t_a=(math.sqrt(tau_a / 2),) * 2, t_b=(math.sqrt(tau_b / 2),) * 2)


# --- key rate ----------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyRateReport:
    i_ab: float
    chi: float
    rate_per_use: float
    rate_per_second: float
    direction: str
    backend: str
    xi_mean: float
    xi_per_frame: list
    tau_a: float
    tau_b: float
    noise_split: float = 0.5
    negative: bool = False

    def to_dict(self) -> dict:
        return dict(i_ab=self.i_ab, chi=self.chi, rate_per_use=self.rate_per_use,
                    rate_per_second=self.rate_per_second, direction=self.direction,
                    backend=self.backend, xi_mean=self.xi_mean,
                    xi_per_frame=[list(f) for f in self.xi_per_frame],
                    tau_a=self.tau_a, tau_b=self.tau_b, noise_split=self.noise_split,
                    negative=self.negative)


def _clip_tau(t: float) -> float:
    return min(max(t, 0.0), 1.0)


def key_rate(fit: RelayFit, cfg: SystemConfig, direction: str | None = None,
             backend: str = "conditional-cm", noise_split: float | None = None) -> KeyRateReport:
    """R = beta_rec * I_AB - chi for one backend and inference direction.

    Negative rates are reported as they are and flagged.
    """
    direction = direction or cfg.direction
    split = cfg.noise_split if noise_split is None else noise_split
    _reference_mode(direction)
    tau_a = _clip_tau(fit.tau_a)
    tau_b = _clip_tau(fit.tau_b)
    xi = max(fit.xi, 0.0)
    if backend == "conditional-cm":
        cm = conditional_cm(cfg.v_alice, cfg.v_bob, tau_a, tau_b,
                            2 * xi * split, 2 * xi * (1 - split))
        i_ab = conditional_mutual_information(cm, direction)
        chi = holevo_mdi(cm, direction)
    elif backend == "equivalent-oneway":
        v, tau = (cfg.v_alice, tau_a) if direction == "bob-infers" else (cfg.v_bob, tau_b)
        i_ab = mutual_information(v, tau / 2, xi)
        if tau > 0:
            chi = oneway_holevo(v, tau, (1 + 2 * xi) / tau)
        else:
            chi = 0.0
    else:
        raise ValueError(f"backend must be one of {BACKENDS}")
    rate = cfg.beta_rec * i_ab - chi
    return KeyRateReport(i_ab=float(i_ab), chi=float(chi), rate_per_use=float(rate),
                         rate_per_second=float(rate * cfg.symbol_rate), direction=direction,
                         backend=backend, xi_mean=float(fit.xi_mean),
                         xi_per_frame=list(fit.xi_per_frame), tau_a=float(fit.tau_a),
                         tau_b=float(fit.tau_b), noise_split=float(split), negative=rate < 0)


def key_rate_summary(fit: RelayFit, cfg: SystemConfig) -> dict:
    """Both backends and directions, plus the worst case over the excess-noise split."""
    reports = [key_rate(fit, cfg, d, b) for b in BACKENDS for d in DIRECTIONS]
    scan = {s: key_rate(fit, cfg, cfg.direction, "conditional-cm", s).rate_per_use for s in SPLIT_SCAN}
    worst = min(scan, key=scan.get)
    return dict(
        protocol_direction=cfg.direction,
        reports=[r.to_dict() for r in reports],
        split_scan={f"{s:g}": r for s, r in scan.items()},
        worst_case=dict(noise_split=worst, rate_per_use=scan[worst]),
    )
