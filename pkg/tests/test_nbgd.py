import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frpopt.errors import DivergedError, IllConditionedError, InvalidArgumentError
from frpopt.frontend import generate_symbols
from frpopt.kernels import KernelTensor
from frpopt.model import FrpConfig, frp_predict
from frpopt.nbgd import (
    NbgdConfig,
    TrainBatch,
    _quadratic,
    least_squares_oracle,
    nbgd_fit,
    rmse_gradient,
    rmse_objective,
)

CFG1 = FrpConfig.for_power(10.0, 1.3e-3, 1)
KAPPA = 8 / 9 * CFG1.gamma * CFG1.es


def synthetic(memory=1, n=256, seed=0, noise=0.0, scale=0.02):
    """Batch generated by the FRP model itself, with scaled coefficients of size ``scale``."""
    rng = np.random.default_rng(seed)
    size = 2 * memory + 1
    x = scale * (rng.normal(size=(size,) * 3) + 1j * rng.normal(size=(size,) * 3))
    S = KernelTensor(memory, x / KAPPA)
    cfg = FrpConfig(CFG1.gamma, CFG1.es, memory)
    a = generate_symbols(n, seed + 100)
    r = frp_predict(a, S, cfg)
    if noise:
        r = r + noise * (rng.normal(size=r.shape) + 1j * rng.normal(size=r.shape))
    return TrainBatch([(a, r)], {"seed": seed}), S, cfg


# -- batch container ----------------------------------------------------------

def test_batch_validation():
    a = generate_symbols(8, 1)
    with pytest.raises(InvalidArgumentError):
        TrainBatch([])
    with pytest.raises(InvalidArgumentError):
        TrainBatch([(a, a[:4])])
    with pytest.raises(InvalidArgumentError):
        TrainBatch([(a[:, 0], a[:, 0])])


@given(n1=st.integers(1, 20), n2=st.integers(1, 20), seed=st.integers(0, 1000))
def test_batch_bytes_round_trip(tmp_path_factory, n1, n2, seed):
    rng = np.random.default_rng(seed)
    recs = [(generate_symbols(n, seed + i), rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2)))
            for i, n in enumerate((n1, n2))]
    batch = TrainBatch(recs, {"power_dbm": 3.0, "seed": seed})
    path = tmp_path_factory.mktemp("b") / "x.frb"
    batch.save(path)
    back = TrainBatch.load(path)
    assert back.meta == batch.meta and back.n_symbols == n1 + n2
    for (a, r), (a2, r2) in zip(batch.records, back.records):
        np.testing.assert_array_equal(a, a2)
        np.testing.assert_array_equal(r, r2)
    assert back.to_bytes() == batch.to_bytes()


def test_batch_load_rejects_other_files(tmp_path):
    p = tmp_path / "x.frb"
    p.write_bytes(b"not a batch\n")
    with pytest.raises(InvalidArgumentError):
        TrainBatch.load(p)


# -- objective and gradient ---------------------------------------------------

def test_rmse_definition():
    batch, S, cfg = synthetic(noise=1e-3)
    a, r = batch.records[0]
    zero = KernelTensor.zeros(1)
    assert rmse_objective(batch, zero, cfg) == pytest.approx(np.sqrt(np.mean(np.abs(r - a) ** 2)), rel=1e-12)
    # noise of std 1e-3 on each real component: E|e|^2 = 2e-6 per complex entry
    assert rmse_objective(batch, S, cfg) == pytest.approx(np.sqrt(2) * 1e-3, rel=0.1)


def test_quadratic_form_matches_objective():
    batch, S, cfg = synthetic(noise=1e-3)
    quad = _quadratic(batch, 1)
    for T in (S, KernelTensor.zeros(1), KernelTensor(1, 0.5 * S.values)):
        assert quad.rmse(T.vector() * KAPPA) == pytest.approx(rmse_objective(batch, T, cfg), rel=1e-9)


def _fd_gradient(batch, S, cfg, h):
    fd = np.zeros(len(S), dtype=complex)
    for i in range(len(S)):
        for unit in (1.0, 1j):
            e = np.zeros(len(S), dtype=complex)
            e[i] = unit * h
            jp = rmse_objective(batch, KernelTensor.from_vector(S.memory, S.vector() + e), cfg)
            jm = rmse_objective(batch, KernelTensor.from_vector(S.memory, S.vector() - e), cfg)
            fd[i] += unit * (jp - jm) / (2 * h)
    # dJ/dRe + j dJ/dIm = 2 dJ/dconj(S)
    return fd / 2


@pytest.mark.parametrize("memory", [0, 1])
def test_gradient_matches_finite_differences(memory):
    batch, S, cfg = synthetic(memory, n=64, noise=1e-3)
    rng = np.random.default_rng(9)
    point = KernelTensor(memory, S.values * (1 + 0.3 * rng.normal(size=S.values.shape)))
    grad, J = rmse_gradient(batch, point, cfg)
    assert J == pytest.approx(rmse_objective(batch, point, cfg), rel=1e-12)
    fd = _fd_gradient(batch, point, cfg, h=1e-6 * np.abs(S.values).max())
    rel = np.abs(fd - grad.reshape(-1)) / np.abs(grad).max()
    assert rel.max() < 1e-6


def test_gradient_vanishes_at_least_squares_optimum():
    batch, _, cfg = synthetic(noise=1e-3)
    S_ls = least_squares_oracle(batch, 1, cfg)
    grad, _ = rmse_gradient(batch, S_ls, cfg)
    g0, _ = rmse_gradient(batch, KernelTensor.zeros(1), cfg)
    assert np.abs(grad).max() < 1e-6 * np.abs(g0).max()


def test_gradient_at_exact_fit_is_zero():
    batch, S, cfg = synthetic()
    a, _ = batch.records[0]
    exact = TrainBatch([(a, a)])
    grad, J = rmse_gradient(exact, KernelTensor.zeros(1), cfg)
    assert J == 0 and not grad.any()


# -- least squares ------------------------------------------------------------

def test_oracle_recovers_generating_tensor():
    batch, S, cfg = synthetic(n=512)
    S_ls = least_squares_oracle(batch, 1, cfg)
    assert np.abs(S_ls.values - S.values).max() < 1e-8 * np.abs(S.values).max()


def test_oracle_errors():
    batch, _, cfg = synthetic(n=16)
    with pytest.raises(InvalidArgumentError):
        least_squares_oracle(batch, 1, cfg)  # 32 equations per 27 unknowns is fine, 16 symbols is not
    a = np.zeros((64, 2), dtype=complex)
    with pytest.raises(IllConditionedError):
        least_squares_oracle(TrainBatch([(a, a)]), 1, cfg)
    batch, _, _ = synthetic(n=64)
    with pytest.raises(IllConditionedError):
        least_squares_oracle(batch, 1, FrpConfig(0.0, CFG1.es, 1))


# -- descent ------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        NbgdConfig(step_size=0.0)
    with pytest.raises(InvalidArgumentError):
        NbgdConfig(decay=1.0)
    with pytest.raises(InvalidArgumentError):
        NbgdConfig(init="random")


def test_fit_reaches_least_squares():
    batch, _, cfg = synthetic(noise=1e-3)
    S, trace = nbgd_fit(batch, KernelTensor.zeros(1), NbgdConfig(), cfg)
    J_ls = rmse_objective(batch, least_squares_oracle(batch, 1, cfg), cfg)
    assert rmse_objective(batch, S, cfg) <= J_ls * (1 + 1e-4)
    assert trace.reason == "converged"
    assert trace.best[-1] == pytest.approx(rmse_objective(batch, S, cfg), rel=1e-9)


def test_trace_shape_and_monotone_best():
    batch, _, cfg = synthetic(noise=1e-3)
    _, trace = nbgd_fit(batch, KernelTensor.zeros(1), NbgdConfig(max_iters=300), cfg)
    assert trace.objective.size == trace.best.size == trace.iterations + 1
    assert trace.step_length.size == trace.iterations
    assert np.all(np.diff(trace.best) <= 0)
    np.testing.assert_allclose(trace.step_length[:10], 1e-3, rtol=1e-12)


def test_fit_is_deterministic():
    batch, _, cfg = synthetic(noise=1e-3)
    S1, t1 = nbgd_fit(batch, KernelTensor.zeros(1), NbgdConfig(max_iters=200), cfg)
    S2, t2 = nbgd_fit(batch, KernelTensor.zeros(1), NbgdConfig(max_iters=200), cfg)
    np.testing.assert_array_equal(S1.values, S2.values)
    np.testing.assert_array_equal(t1.objective, t2.objective)


def test_fit_meta():
    batch, _, cfg = synthetic(noise=1e-3)
    S, trace = nbgd_fit(batch, KernelTensor.zeros(1), NbgdConfig(max_iters=50), cfg)
    tr = S.meta["training"]
    assert S.meta["provenance"] == "nbgd"
    assert tr["iterations"] == trace.iterations == 50 and tr["reason"] == "max_iters"
    assert tr["n_symbols"] == batch.n_symbols and tr["batch"] == {"seed": 0}


def test_fit_from_exact_init_returns_it():
    batch, S, cfg = synthetic()
    a, _ = batch.records[0]
    exact = TrainBatch([(a, a)])
    out, trace = nbgd_fit(exact, KernelTensor.zeros(1), NbgdConfig(), cfg)
    assert trace.iterations == 0 and not out.values.any()


def test_fit_with_zero_nonlinearity_is_degenerate():
    batch, _, _ = synthetic(noise=1e-3)
    cfg = FrpConfig(0.0, CFG1.es, 1)
    out, trace = nbgd_fit(batch, KernelTensor.zeros(1), NbgdConfig(), cfg)
    assert trace.iterations == 0 and "degenerate" in trace.reason


def test_divergence_raises_with_trace():
    batch, S, cfg = synthetic(noise=1e-3)
    with pytest.raises(DivergedError) as info:
        nbgd_fit(batch, S, NbgdConfig(step_size=10.0), cfg)
    assert info.value.trace.reason == "diverged"
    assert info.value.trace.objective[-1] > 10 * info.value.trace.objective[0]


def test_memory_mismatch_rejected():
    batch, _, cfg = synthetic()
    with pytest.raises(InvalidArgumentError):
        nbgd_fit(batch, KernelTensor.zeros(2), NbgdConfig(), cfg)


@given(seed=st.integers(0, 1000), phase=st.floats(-np.pi, np.pi))
def test_objective_invariant_under_common_phase(seed, phase):
    batch, S, cfg = synthetic(n=32, seed=seed, noise=1e-3)
    rot = np.exp(1j * phase)
    (a, r), = batch.records
    rotated = TrainBatch([(a * rot, r * rot)])
    assert rmse_objective(rotated, S, cfg) == pytest.approx(rmse_objective(batch, S, cfg), rel=1e-9)
    assert math.isfinite(rmse_objective(rotated, KernelTensor.zeros(1), cfg))


# -- worked examples ----------------------------------------------------------

def test_objective_vanishes_at_generating_tensor():
    batch, S, cfg = synthetic()
    assert rmse_objective(batch, S, cfg) < 1e-12


def test_objective_and_gradient_independent_of_record_order():
    batch, S, cfg = synthetic(n=64, noise=1e-3)
    (a, r), = batch.records
    other, _, _ = synthetic(n=48, seed=3, noise=1e-3)
    fwd = TrainBatch([(a, r), other.records[0]])
    rev = TrainBatch([other.records[0], (a, r)])
    point = KernelTensor(1, 0.5 * S.values)
    g1, J1 = rmse_gradient(fwd, point, cfg)
    g2, J2 = rmse_gradient(rev, point, cfg)
    assert J1 == pytest.approx(J2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-12 * np.abs(g1).max())


@pytest.mark.parametrize("lam", [1e-3, 0.5, 7.0])
def test_gradient_at_zero_invariant_to_residual_scale(lam):
    batch, _, cfg = synthetic(noise=1e-3)
    (a, r), = batch.records
    scaled = TrainBatch([(a, a + lam * (r - a))])
    g, J = rmse_gradient(batch, KernelTensor.zeros(1), cfg)
    gs, Js = rmse_gradient(scaled, KernelTensor.zeros(1), cfg)
    assert Js == pytest.approx(lam * J, rel=1e-12)
    np.testing.assert_allclose(gs, g, rtol=1e-9, atol=1e-12 * np.abs(g).max())


def test_fit_close_to_least_squares_in_frobenius_norm():
    batch, _, cfg = synthetic(noise=1e-3)
    S, _ = nbgd_fit(batch, KernelTensor.zeros(1), NbgdConfig(), cfg)
    S_ls = least_squares_oracle(batch, 1, cfg)
    assert np.linalg.norm(S.values - S_ls.values) < 1e-3 * np.linalg.norm(S_ls.values)
    assert rmse_objective(batch, S_ls, cfg) <= rmse_objective(batch, S, cfg) + 1e-9


def test_fit_from_generating_tensor_keeps_it():
    batch, S, cfg = synthetic()
    out, _ = nbgd_fit(batch, S, NbgdConfig(max_iters=300), cfg)
    np.testing.assert_allclose(out.values, S.values, rtol=1e-12)


def test_step_lengths_are_halvings_of_initial_step():
    batch, _, cfg = synthetic(noise=1e-3)
    nb = NbgdConfig(max_iters=2000)
    _, trace = nbgd_fit(batch, KernelTensor.zeros(1), nb, cfg)
    k = np.log2(nb.step_size / trace.step_length)
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)
    assert np.all(np.diff(np.round(k)) >= 0)
    assert k.max() >= 1


def test_memory_zero_single_polarization_least_squares_by_hand():
    cfg = FrpConfig(CFG1.gamma, CFG1.es, 0)
    rng = np.random.default_rng(11)
    a = np.zeros((64, 2), dtype=complex)
    a[:, 0] = generate_symbols(64, 12)[:, 0]
    r = a + 1e-3 * (rng.normal(size=a.shape) + 1j * rng.normal(size=a.shape))
    x = a[:, 0]
    f = cfg.prefactor * np.abs(x) ** 2 * x
    # the y component carries no feature, so only the x residual informs the fit
    expected = np.vdot(f, r[:, 0] - x) / np.vdot(f, f)
    S = least_squares_oracle(TrainBatch([(a, r)]), 0, cfg)
    assert S[0, 0, 0] == pytest.approx(expected, rel=1e-10)
