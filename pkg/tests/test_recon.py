import numpy as np
import pytest

from oedipus import (
    DesignObjective,
    ImageGrid,
    ReconProblem,
    SolverFailureError,
    TransformSpec,
    build_cartesian_candidates,
    irls_solve,
    nrmse,
    pattern_from_groups,
    render_phantom,
    retrospective_undersample,
    single_channel_model,
    tv_operator,
    uniform_pattern,
)
from oedipus.baselines import BaselineSpec
from oedipus.phantoms import default_phantom_spec
from oedipus.recon import WaveletOperator

from conftest import make_model


def full_pattern(model):
    return pattern_from_groups(
        model.candidates, range(model.candidates.L), mode="full"
    )


def test_nrmse_basics(rng):
    gold = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    assert nrmse(gold, gold) == 0.0
    assert nrmse(np.zeros(16), gold) == pytest.approx(1.0)
    assert nrmse(2 * gold, gold) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nrmse(gold, np.zeros(16))


def test_tv_operator_constant_and_ramp():
    tv = tv_operator((4, 4))
    assert np.allclose(tv.forward(np.ones(16)), 0.0)
    ramp = np.arange(4.0)[None, :].repeat(4, axis=0)  # ramp along axis 1
    out = tv.forward(ramp.ravel())
    d1, d2 = out[:16].reshape(4, 4), out[16:].reshape(4, 4)
    assert np.allclose(d1, 0.0)
    assert np.allclose(d2[:, :-1], 1.0)
    assert np.allclose(d2[:, -1], 0.0)
    with pytest.raises(ValueError):
        tv_operator((1, 4))


def test_tv_adjoint_random_pairs(rng):
    tv = tv_operator((8, 6))
    for _ in range(100):
        x = rng.standard_normal(48) + 1j * rng.standard_normal(48)
        y = rng.standard_normal(96) + 1j * rng.standard_normal(96)
        lhs = np.vdot(y, tv.forward(x))
        rhs = np.vdot(tv.adjoint(y), x)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_wavelet_operator_adjoint(rng):
    op = WaveletOperator((8, 8), TransformSpec("daub4", 2))
    for _ in range(25):
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        y = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        lhs = np.vdot(y, op.forward(x))
        rhs = np.vdot(op.adjoint(y), x)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_retrospective_full_sampling_is_dft(rng):
    model = make_model((8, 8))
    pattern = full_pattern(model)
    img = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    d = retrospective_undersample(img, pattern, model)
    cand = model.candidates
    spec2d = np.fft.fft2(img.reshape(8, 8))
    expected = []
    for g in pattern.kept_groups:
        for loc in cand.group_locs[g]:
            m1, m2 = cand.kidx[loc]
            expected.append(spec2d[m1 % 8, m2 % 8])
    assert np.allclose(d, expected, atol=1e-10)
    assert np.allclose(retrospective_undersample(np.zeros(64), pattern, model), 0.0)


def test_retrospective_noise_statistics(rng):
    model = make_model((4, 4))
    pattern = full_pattern(model)
    img = np.zeros(16, dtype=complex)
    sigma = 0.7
    draws = []
    for seed in range(200):
        draws.append(
            retrospective_undersample(img, pattern, model, noise_sigma=sigma, seed=seed)
        )
    stacked = np.concatenate(draws)  # 200 * 16 = 3200 samples
    var = np.mean(np.abs(stacked) ** 2)
    assert var == pytest.approx(sigma**2, rel=0.05)
    a = retrospective_undersample(img, pattern, model, noise_sigma=sigma, seed=5)
    b = retrospective_undersample(img, pattern, model, noise_sigma=sigma, seed=5)
    assert np.array_equal(a, b)


def _phantom_model(dims=(16, 16)):
    grid = ImageGrid(dims, (100.0, 100.0))
    cand = build_cartesian_candidates(grid, undersample_axes=(0,), n_coils=1)
    model = single_channel_model(grid, cand)
    gold = render_phantom(default_phantom_spec(grid, 0))
    return model, gold


def test_lambda_to_zero_full_sampling_recovers_image():
    model, gold = _phantom_model()
    pattern = full_pattern(model)
    d = retrospective_undersample(gold, pattern, model)
    problem = ReconProblem(
        data=d,
        pattern=pattern,
        model=model,
        regularizer="wavelet",
        transform=TransformSpec("daub4", 2),
        lam=1e-12,
        max_iters=10,
        tol=1e-10,
    )
    result = irls_solve(problem)
    assert nrmse(result.image, gold) < 1e-4


def test_irls_objective_monotone_random_problems(rng):
    model, _ = _phantom_model((8, 8))
    spec = TransformSpec("haar", 1)
    pattern = uniform_pattern(BaselineSpec(kind="uniform", R=2), model.candidates)
    for trial in range(20):
        img = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        d = retrospective_undersample(img, pattern, model, noise_sigma=0.5, seed=trial)
        problem = ReconProblem(
            data=d,
            pattern=pattern,
            model=model,
            regularizer="tv" if trial % 2 else "wavelet",
            transform=spec,
            lam=0.05,
            max_iters=8,
            epsilon_scale=1e-3,
            inner_tol=1e-8,
            inner_max_iters=500,
        )
        result = irls_solve(problem)
        log = np.array(result.objective_log)
        assert np.all(np.diff(log) <= 1e-9 + 1e-12 * np.abs(log[:-1]))


def test_tv_recon_beats_zero_fill_on_piecewise_constant():
    grid = ImageGrid((32, 32), (100.0, 100.0))
    cand = build_cartesian_candidates(grid, undersample_axes=(0,), n_coils=1)
    model = single_channel_model(grid, cand)
    gold = render_phantom(
        default_phantom_spec(grid, 0).__class__(
            grid=grid, phase="none", texture=0.0, perturbation_seed=0
        )
    )
    pattern = uniform_pattern(BaselineSpec(kind="uniform", R=2), cand)
    d = retrospective_undersample(gold, pattern, model)
    from oedipus import EncodingOperator

    op = EncodingOperator(model, pattern.kept_groups, 0)
    zero_fill = op.adjoint(d) / model.N * pattern.R  # density-scaled adjoint
    problem = ReconProblem(
        data=d,
        pattern=pattern,
        model=model,
        regularizer="tv",
        lam=0.01,
        max_iters=30,
        epsilon_scale=1e-3,
        inner_tol=1e-6,
        inner_max_iters=600,
    )
    result = irls_solve(problem)
    assert nrmse(result.image, gold) < nrmse(zero_fill, gold)


def test_solver_failure_carries_log():
    model, gold = _phantom_model()
    pattern = uniform_pattern(BaselineSpec(kind="uniform", R=2), model.candidates)
    d = retrospective_undersample(gold, pattern, model)
    problem = ReconProblem(
        data=d,
        pattern=pattern,
        model=model,
        regularizer="wavelet",
        transform=TransformSpec("daub4", 2),
        lam=0.01,
        max_iters=5,
        inner_tol=1e-12,
        inner_max_iters=2,
    )
    with pytest.raises(SolverFailureError) as exc:
        irls_solve(problem)
    assert len(exc.value.objective_log) >= 1


def test_problem_validation(rng):
    model, gold = _phantom_model()
    pattern = full_pattern(model)
    d = retrospective_undersample(gold, pattern, model)
    with pytest.raises(ValueError):
        ReconProblem(data=d, pattern=pattern, model=model, regularizer="tikhonov")
    with pytest.raises(ValueError):
        ReconProblem(data=d, pattern=pattern, model=model, lam=0.0)
    with pytest.raises(ValueError):
        ReconProblem(data=d[:-1], pattern=pattern, model=model)
