import numpy as np
import pytest

from oedipus import (
    EncodingModel,
    ImageGrid,
    SupportSet,
    build_cartesian_candidates,
    single_channel_model,
    synthesize_coil_maps,
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_model(dims=(8, 8), n_coils=1, undersample_axes=(0, 1), seed=0, oversampling=1.0):
    """Small encoding model with synthetic coil maps (unit map for 1 coil)."""
    grid = ImageGrid(dims, (float(dims[0]) * 2, float(dims[1]) * 2))
    cand = build_cartesian_candidates(
        grid, oversampling=oversampling, undersample_axes=undersample_axes, n_coils=n_coils
    )
    if n_coils == 1:
        return single_channel_model(grid, cand)
    maps = (synthesize_coil_maps(grid, n_coils, seed=seed),)
    return EncodingModel(grid=grid, candidates=cand, coil_maps=maps)


def random_support(rng, q, s):
    return SupportSet(indices=rng.choice(q, size=s, replace=False), q=q)


def dense_candidate_matrix(model, t=0):
    """Stack every candidate row densely (test oracle only)."""
    from oedipus import candidate_row

    return np.stack(
        [candidate_row(model, p, t) for p in range(model.candidates.P)]
    )


def dense_transform_matrix(dims, spec):
    """Materialize the transform as an explicit Q x N matrix (oracle)."""
    from oedipus import forward_transform

    n = dims[0] * dims[1]
    cols = []
    unit = np.zeros(n, dtype=complex)
    for j in range(n):
        unit[:] = 0
        unit[j] = 1.0
        cols.append(forward_transform(unit.reshape(dims), spec).ravel())
    return np.stack(cols, axis=1)
