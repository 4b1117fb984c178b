import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlident import kernel as kern


def test_fractional_value():
    k = kern.fractional(2**-4, 0.7)
    assert kern.eval(k, 0.0, 2**-5) == pytest.approx(4096.0, rel=1e-12)


def test_integrable_value():
    k = kern.integrable(2**-4)
    assert kern.eval(k, 0.3, 0.3 + 2**-5) == pytest.approx(8192.0, rel=1e-12)


@pytest.mark.parametrize("k", [kern.fractional(0.1, 0.3), kern.integrable(0.1)])
def test_zero_beyond_radius(k):
    assert kern.eval(k, 0.0, 0.2) == 0.0


def test_diagonal_rejected():
    with pytest.raises(ValueError):
        kern.eval(kern.integrable(0.1), 0.5, 0.5)


@pytest.mark.parametrize("k,p", [(kern.fractional(1, 0.7), 2.4), (kern.fractional(1, 0.5), 2.0),
                                 (kern.integrable(1), 1.0)])
def test_singularity_exponent(k, p):
    assert kern.singularity_exponent(k) == pytest.approx(p)


@pytest.mark.parametrize("bad", [dict(family="fractional", eps=0.1, s=1.2),
                                 dict(family="fractional", eps=0.1),
                                 dict(family="integrable", eps=0.0),
                                 dict(family="integrable", eps=0.1, s=0.5)])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        kern.KernelSpec(**bad)


kernels = st.one_of(
    st.builds(kern.fractional, st.floats(0.01, 1.0), st.floats(0.05, 0.95)),
    st.builds(kern.integrable, st.floats(0.01, 1.0)),
)


def test_symmetry_many_pairs():
    rng = np.random.default_rng(3)
    x, y = rng.uniform(-1, 1, (2, 10**6))
    for k in (kern.fractional(0.5, 0.7), kern.integrable(0.5)):
        assert np.array_equal(kern.eval(k, x, y), kern.eval(k, y, x))


@settings(max_examples=100, deadline=None)
@given(k=kernels, x=st.floats(-1, 1), r=st.floats(1e-6, 2.0))
def test_truncation_and_positivity(k, x, r):
    v = kern.eval(k, x, x + r)
    if r > k.eps * (1 + 1e-12):
        assert v == 0.0
    elif r < k.eps * (1 - 1e-12):
        assert v > 0.0


@settings(max_examples=100, deadline=None)
@given(k=kernels, t1=st.floats(0.01, 1.0), t2=st.floats(0.01, 1.0))
def test_monotone_decay(k, t1, t2):
    r1, r2 = sorted([t1 * k.eps, t2 * k.eps])
    assert kern.eval_radial(k, r1) >= kern.eval_radial(k, r2)
