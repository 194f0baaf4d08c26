import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvmdi.core import derive_stream, load_config
from cvmdi.recovery import RecoveredSymbols
from cvmdi.security import (RelayFit, UnphysicalStateError, analytic_fit, conditional_cm,
                            conditional_mutual_information, entropy, fit_relay_model, heterodyne_condition,
                            holevo_mdi, key_rate, key_rate_summary, mutual_information, omega,
                            oneway_holevo, relay_cm, symplectic_eigenvalues, tmsv_cm, von_neumann_g)
from cvmdi.transmitter import generate_symbols


@pytest.fixture(scope="module")
def paper():
    return load_config(profile="paper")


# --- entropy kernels ------------------------------------------------------------

def test_g_values():
    assert von_neumann_g(1.0) == 0.0
    assert von_neumann_g(3.0) == 2.0
    assert von_neumann_g(7.0) == pytest.approx(8 - 3 * math.log2(3), abs=1e-12)
    assert von_neumann_g(1 - 1e-10) == 0.0
    with pytest.raises(ValueError):
        von_neumann_g(0.99)


def test_symplectic_basic():
    assert np.allclose(symplectic_eigenvalues(np.eye(4)), [1, 1])
    assert np.allclose(symplectic_eigenvalues(np.diag([3.0, 3.0])), [3])
    for mu in (1.0, 1.5, 37.0, 1e4):
        assert np.allclose(symplectic_eigenvalues(tmsv_cm(mu)), [1, 1], atol=1e-9)
    with pytest.raises(ValueError):
        symplectic_eigenvalues(np.array([[1.0, 0.5], [0.0, 1.0]]))


def _random_symplectic(rng, n):
    """Product of random beamsplitters/phase rotations (passive) and single-mode squeezers."""
    s = np.eye(2 * n)
    for _ in range(4):
        for k in range(n):
            th = rng.uniform(0, 2 * np.pi)
            r = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
            z = np.exp(rng.uniform(-0.5, 0.5))
            blk = np.eye(2 * n)
            blk[2 * k:2 * k + 2, 2 * k:2 * k + 2] = r @ np.diag([z, 1 / z])
            s = blk @ s
    return s


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_entropy_symplectic_invariance(seed):
    rng = np.random.default_rng(seed)
    cm = conditional_cm(*rng.uniform(0, 50, 2), *rng.uniform(0.05, 1, 2), *rng.uniform(0, 0.3, 2))
    s = _random_symplectic(rng, 2)
    assert np.allclose(s @ omega(2) @ s.T, omega(2))
    assert entropy(s @ cm @ s.T) == pytest.approx(entropy(cm), abs=1e-7)


# --- covariance models --------------------------------------------------------------

def test_conditional_vacuum_inputs():
    assert np.allclose(conditional_cm(0, 0, 0.5, 0.7, 0, 0), np.eye(4), atol=1e-12)


def test_conditional_noiseless_is_pure():
    cm = conditional_cm(36, 36, 1, 1, 0, 0)
    assert np.allclose(symplectic_eigenvalues(cm), [1, 1], atol=1e-9)
    assert holevo_mdi(cm) == pytest.approx(0.0, abs=1e-6)


def test_conditioning_reduces_diagonal():
    args = (36, 36, 0.94, 0.59, 0.1, 0.13)
    full = relay_cm(*args)[:4, :4]
    cond = conditional_cm(*args)
    assert np.all(np.diag(cond) <= np.diag(full) + 1e-12)


def test_relay_cm_validation():
    with pytest.raises(ValueError):
        relay_cm(1, 1, 1.2, 0.5, 0, 0)
    with pytest.raises(ValueError):
        relay_cm(1, 1, 0.5, 0.5, -0.1, 0)


def test_heterodyne_on_tmsv():
    # heterodyning one half of a TMSV leaves a pure displaced state
    out = heterodyne_condition(tmsv_cm(10.0), 0)
    assert np.allclose(out, np.eye(2))


@settings(max_examples=1000, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 1), st.floats(0.01, 1),
       st.floats(0, 2), st.floats(0, 2), st.sampled_from(["bob-infers", "alice-infers"]))
def test_holevo_nonnegative(va, vb, ta, tb, ea, eb, direction):
    cm = conditional_cm(va, vb, ta, tb, ea, eb)
    assert holevo_mdi(cm, direction) >= -1e-9


def test_holevo_monotone_in_eps_b():
    chis = [holevo_mdi(conditional_cm(36, 36, 0.94, 0.59, 0.05, e)) for e in np.linspace(0, 0.5, 10)]
    assert np.all(np.diff(chis) >= -1e-12)


def test_unphysical_rejected(monkeypatch):
    import cvmdi.security as sec
    monkeypatch.setattr(sec, "relay_cm", lambda *a: 0.1 * np.eye(8))
    with pytest.raises(UnphysicalStateError):
        sec.conditional_cm(1, 1, 1, 1, 0, 0)


# --- mutual information ---------------------------------------------------------------

def test_mutual_information_examples():
    assert mutual_information(36, 0.0, 0.1) == 0.0
    assert mutual_information(2, 0.5, 0.0) == pytest.approx(1.0)
    t2 = 0.94 * 10 ** -0.2 / 2
    assert mutual_information(36, t2, 0.11) == pytest.approx(3.4, abs=0.05)


def test_conditional_mi_symmetric_case():
    cm = conditional_cm(10, 10, 1, 1, 0, 0)
    assert conditional_mutual_information(cm, "bob-infers") == pytest.approx(
        conditional_mutual_information(cm, "alice-infers"))


# --- key rate ------------------------------------------------------------------------------

def test_rate_definition(paper):
    fit = analytic_fit(paper)
    r = key_rate(fit, paper)
    assert r.rate_per_use == pytest.approx(paper.beta_rec * r.i_ab - r.chi)
    assert r.rate_per_second == pytest.approx(r.rate_per_use * paper.symbol_rate)
    assert r.negative == (r.rate_per_use < 0)


def test_beta_one_chi_zero_gives_i(paper):
    cfg = paper.replace(beta_rec=1.0)
    fit = RelayFit(tau_a=1.0, tau_b=1.0, xi_x=0.0, xi_p=0.0)
    r = key_rate(fit, cfg)
    assert r.chi == pytest.approx(0.0, abs=1e-6)
    assert r.rate_per_use == pytest.approx(r.i_ab, abs=1e-6)


def test_rate_decreasing_in_bob_loss(paper):
    rates = [key_rate(analytic_fit(paper.replace(loss_bob_db=d)), paper).rate_per_use
             for d in np.arange(0, 6.01, 0.5)]
    assert np.all(np.diff(rates) < 0)


@pytest.mark.parametrize("direction", ["bob-infers", "alice-infers"])
def test_rate_nonincreasing_in_xi(paper, direction):
    rates = [key_rate(RelayFit(0.94, 0.59, x, x), paper, direction).rate_per_use
             for x in np.linspace(0, 0.3, 13)]
    assert np.all(np.diff(rates) <= 1e-12)


@settings(max_examples=800, deadline=None)
@given(st.floats(1, 60), st.floats(0.05, 1), st.floats(0.05, 1), st.floats(0, 0.5),
       st.sampled_from(["bob-infers", "alice-infers"]))
def test_conditional_not_below_oneway(v, ta, tb, xi, direction):
    cfg = load_config(profile="paper", v_alice=v, v_bob=v)
    fit = RelayFit(ta, tb, xi, xi)
    cond = key_rate(fit, cfg, direction, "conditional-cm").rate_per_use
    one = key_rate(fit, cfg, direction, "equivalent-oneway").rate_per_use
    assert cond >= one - 1e-9


def test_oneway_pure_loss_reference():
    # heterodyne-reference direct reconciliation bound at unit transmittance and no noise is 0
    assert oneway_holevo(36, 1.0, 0.0) == pytest.approx(0.0, abs=1e-6)


def test_summary_contents(paper):
    s = key_rate_summary(analytic_fit(paper), paper)
    assert len(s["reports"]) == 4
    assert {(r["backend"], r["direction"]) for r in s["reports"]} == {
        (b, d) for b in ("conditional-cm", "equivalent-oneway") for d in ("bob-infers", "alice-infers")}
    assert s["worst_case"]["rate_per_use"] == min(s["split_scan"].values())
    fields = set(s["reports"][0])
    assert {"i_ab", "chi", "rate_per_use", "rate_per_second", "direction", "backend", "xi_mean",
            "xi_per_frame", "tau_a", "tau_b"} <= fields


def test_bad_direction_or_backend(paper):
    with pytest.raises(ValueError):
        key_rate(analytic_fit(paper), paper, direction="eve-infers")
    with pytest.raises(ValueError):
        key_rate(analytic_fit(paper), paper, backend="magic")


# --- fit --------------------------------------------------------------------------------------

def _synthetic_fit(tau_a, tau_b, xi, n=200_000, v=36.0, seed=0):
    rng = derive_stream(seed, "fit")
    a = generate_symbols(n, v, rng, "alice")
    b = generate_symbols(n, v, rng, "bob")
    noise = np.sqrt(1 + xi) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    gamma = math.sqrt(tau_a / 2) * a.symbols + math.sqrt(tau_b / 2) * np.conj(b.symbols) + noise
    return fit_relay_model(a, b, RecoveredSymbols(gamma, 0, None))


def test_fit_generative_oracle():
    fit = _synthetic_fit(0.94, 0.59, 0.05)
    se = (1 + 0.05) * math.sqrt(2 / fit.n_symbols)
    assert fit.xi_x == pytest.approx(0.05, abs=3 * se)
    assert fit.xi_p == pytest.approx(0.05, abs=3 * se)
    assert fit.tau_a == pytest.approx(0.94, abs=0.01)
    assert fit.tau_b == pytest.approx(0.59, abs=0.01)


def test_fit_ideal_chain():
    fit = _synthetic_fit(1.0, 1.0, 0.0)
    assert fit.tau_a == pytest.approx(1.0, abs=0.01)
    assert fit.xi == pytest.approx(0.0, abs=0.01)


def test_fit_scale_consistent():
    f1 = _synthetic_fit(0.94, 0.59, 0.1, v=36.0, seed=4)
    f2 = _synthetic_fit(0.94, 0.59, 0.1, v=72.0, seed=5)
    assert f1.tau_a == pytest.approx(f2.tau_a, abs=0.01)
    assert f1.tau_b == pytest.approx(f2.tau_b, abs=0.01)


def test_fit_rejects_short_input():
    rng = np.random.default_rng(0)
    a = generate_symbols(500, 1.0, rng, "alice")
    b = generate_symbols(500, 1.0, rng, "bob")
    with pytest.raises(ValueError):
        fit_relay_model(a, b, RecoveredSymbols(a.symbols, 0))


def test_fit_negative_xi_flagged():
    fit = _synthetic_fit(0.9, 0.6, -0.2, n=5000)
    assert fit.xi_negative and fit.xi_significantly_negative
    r = key_rate(fit, load_config(profile="paper"))
    assert math.isfinite(r.rate_per_use)
