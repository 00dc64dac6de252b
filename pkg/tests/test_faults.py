import numpy as np
import pytest

from spikefem.faults import (FaultRealization, FaultSpec, sample_ablation_mask,
                             sample_drop_mask)


def test_spec_validation():
    with pytest.raises(ValueError):
        FaultSpec(ablation_p=-0.1)
    with pytest.raises(ValueError):
        FaultSpec(drop_p=1.5)
    assert FaultSpec().is_none
    assert not FaultSpec(drop_p=0.5).is_none


def test_ablation_extremes():
    rng = np.random.default_rng(0)
    assert not sample_ablation_mask(100, 0.0, rng).any()
    assert sample_ablation_mask(100, 1.0, rng).all()
    with pytest.raises(ValueError):
        sample_ablation_mask(10, 1.1, rng)


def test_ablation_binomial_concentration():
    rng = np.random.default_rng(321)
    m, p = 3600, 0.32
    count = int(sample_ablation_mask(m, p, rng).sum())
    bound = 4.0 * np.sqrt(m * p * (1 - p))
    assert abs(count - m * p) <= bound


def test_drop_extremes_every_step():
    rng = np.random.default_rng(5)
    for _ in range(50):
        assert not sample_drop_mask(64, 0.0, rng).any()
        assert sample_drop_mask(64, 1.0, rng).all()


def test_drop_delivered_fraction():
    rng = np.random.default_rng(7)
    n_steps, p = 20_000, 0.9
    dropped = np.array([sample_drop_mask(1, p, rng)[0] for _ in range(n_steps)])
    delivered_fraction = 1.0 - dropped.mean()
    assert 0.08 <= delivered_fraction <= 0.12


def test_drop_stream_lag1_autocorrelation():
    rng = np.random.default_rng(13)
    stream = np.array([sample_drop_mask(1, 0.5, rng)[0] for _ in range(20_000)],
                      dtype=float)
    centered = stream - stream.mean()
    rho = (centered[1:] @ centered[:-1]) / (centered @ centered)
    assert abs(rho) < 0.03


def test_chunked_draws_match_per_step_draws():
    # the kernels draw drop uniforms in blocks; the stream must equal
    # step-by-step sample_drop_mask draws
    a = np.random.default_rng(99)
    b = np.random.default_rng(99)
    chunk = a.random((64, 17)) < 0.3
    singles = np.array([sample_drop_mask(17, 0.3, b) for _ in range(64)])
    assert np.array_equal(chunk, singles)


def test_realization_consumes_rng_only_when_needed():
    spec = FaultSpec(ablation_p=0.0, drop_p=0.0)
    rng = np.random.default_rng(1)
    before = rng.bit_generator.state["state"]["state"]
    real = FaultRealization.realize(spec, 100, rng)
    after = rng.bit_generator.state["state"]["state"]
    assert real.ablation_mask is None
    assert before == after  # a no-fault trial consumes no randomness

    rng2 = np.random.default_rng(1)
    real2 = FaultRealization.realize(FaultSpec(ablation_p=0.4), 100, rng2)
    assert real2.ablation_mask is not None
    assert real2.ablation_mask.dtype == bool
