import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gopsa import backend
from gopsa.features import uvect
from gopsa.spd import matrix_log

from conftest import random_spd, random_sym


class TestSelection:
    def test_python_always_available(self):
        assert "python" in backend.available_backends()

    def test_active_backend_is_listed(self):
        assert backend.BACKEND in backend.available_backends()

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            backend.get_backend("fortran")


class TestKernels:
    @pytest.mark.parametrize("d", [1, 2, 3, 5, 6, 9])
    def test_whiten_logm_matches_reference(self, backend_name, rng, d):
        X = np.stack([random_spd(rng, d, cond=1e3) for _ in range(7)])
        W = random_sym(rng, d) + 2 * d * np.eye(d)
        got = backend.whiten_logm(X, W, backend=backend_name)
        ref = np.stack([matrix_log(W @ x @ W) for x in X])
        np.testing.assert_allclose(got, ref, atol=1e-10 * np.abs(ref).max())

    def test_uvect_variant_matches(self, backend_name, rng):
        X = np.stack([random_spd(rng, 4) for _ in range(5)])
        W = np.eye(4)
        got = backend.whiten_logm_uvect(X, W, backend=backend_name)
        np.testing.assert_allclose(got, uvect(matrix_log(X)), atol=1e-12)

    def test_empty_stack(self, backend_name):
        out = backend.whiten_logm_uvect(np.empty((0, 3, 3)), np.eye(3), backend=backend_name)
        assert out.shape == (0, 6)

    def test_leading_axes_kept(self, backend_name, rng):
        X = np.stack([random_spd(rng, 2) for _ in range(6)]).reshape(2, 3, 2, 2)
        assert backend.whiten_logm(X, np.eye(2), backend=backend_name).shape == (2, 3, 2, 2)
        assert backend.whiten_logm_uvect(X, np.eye(2), backend=backend_name).shape == (2, 3, 3)

    def test_identity_maps_to_zero(self, backend_name):
        out = backend.whiten_logm(np.eye(3)[None], np.eye(3), backend=backend_name)
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    @pytest.mark.skipif("cython" not in backend.available_backends(),
                        reason="compiled extension not built")
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8))
    def test_backends_agree(self, seed, d):
        rng = np.random.default_rng(seed)
        X = np.stack([random_spd(rng, d, cond=1e4) for _ in range(3)])
        W = random_sym(rng, d) + 2 * d * np.eye(d)
        a = backend.whiten_logm_uvect(X, W, backend="python")
        b = backend.whiten_logm_uvect(X, W, backend="cython")
        np.testing.assert_allclose(a, b, atol=1e-9 * max(np.abs(a).max(), 1.0))
