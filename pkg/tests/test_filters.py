"""Wavelet banks, frame bounds and integral Lipschitz constants.

Ground truth:
- closed forms of the diffusion and monic cubic kernels
- direct evaluation of sum_j ||h_j(S) x||^2 on a graph
- a 4x refined derivative grid
"""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgst.filters import (
    FilterBank,
    FilterKernel,
    bank_from_kernels,
    frame_bounds,
    integral_lipschitz,
    make_bank,
    monic_cubic_mother,
)
from pgst.graph import apply_filter, eigendecompose

from conftest import random_shift

FAMILIES = ["diffusion", "monic_cubic", "tight_hann"]


class TestTightHann:

    @pytest.mark.parametrize("J", [2, 3, 5, 8, 13])
    def test_squares_sum_to_constant(self, J):
        bank = make_bank((0.0, 2.0), "tight_hann", J)
        grid = np.linspace(0, 2, 1024)
        total = np.sum(bank.evaluate(grid) ** 2, axis=0)
        assert np.max(np.abs(total - 1.0)) <= 1e-6

    def test_frame_ratio(self):
        bank = make_bank((-1.3, 4.2), "tight_hann", 6)
        assert bank.B / bank.A <= 1 + 1e-6
        assert bank.B**2 - bank.A**2 <= 1e-6 * bank.B**2

    def test_warped_layout_is_still_tight(self):
        lam = eigendecompose(random_shift(40)).eigenvalues
        bank = make_bank((lam[0], lam[-1]), "tight_hann", 5, warp_eigenvalues=lam)
        total = np.sum(bank.evaluate(np.linspace(lam[0], lam[-1], 1024)) ** 2, axis=0)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_windows_overlap_by_half(self):
        bank = make_bank((0.0, 4.0), "ths", 5)
        # interior window j is centred at j and vanishes one width away
        h = bank.evaluate(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(h[2], [0, 1, 0], atol=1e-15)


class TestMonicCubic:

    def test_mother_continuity(self):
        np.testing.assert_allclose(monic_cubic_mother(np.array([1.0, 2.0])), [1.0, 1.0], atol=1e-15)
        for x in (1.0, 2.0):
            left, right = monic_cubic_mother(np.array([x - 1e-9, x + 1e-9]))
            assert abs(left - right) < 1e-7

    def test_mother_branches(self):
        x = np.array([0.5, 1.5, 3.0])
        np.testing.assert_allclose(monic_cubic_mother(x), [0.25, -5 + 16.5 - 13.5 + 3.375, 4 / 9])

    def test_kernels_match_closed_form(self):
        bank = make_bank((0.0, 2.0), "mcs", 4)
        lam = np.linspace(0, 2, 50)
        for k in bank.kernels[1:]:
            np.testing.assert_allclose(k(lam), monic_cubic_mother(k.params["scale"] * lam))
        scaling = bank.kernels[0]
        gamma, u_min = scaling.params["gamma"], scaling.params["u_min"]
        np.testing.assert_allclose(scaling(lam), gamma * np.exp(-((lam / (0.6 * u_min)) ** 4)))

    def test_scales_log_spaced(self):
        bank = make_bank((0.0, 2.0), "mcs", 5)
        s = [k.params["scale"] for k in bank.kernels[1:]]
        np.testing.assert_allclose(np.diff(np.log(s)), np.log(s[1] / s[0]))
        assert s[0] > s[-1]

    def test_lipschitz_grid_refinement(self):
        bank = make_bank((0.0, 2.0), "monic_cubic", 5)
        for k in bank.kernels:
            coarse = integral_lipschitz(k, (0.0, 2.0))
            fine = integral_lipschitz(k, (0.0, 2.0), points=4 * 4096)
            assert abs(coarse - fine) <= 0.01 * fine


class TestDiffusion:

    def test_dyadic_scales_j3(self):
        bank = make_bank((0.0, 2.0), "diffusion", 3, shift_kind="normalized_laplacian")
        lam = np.linspace(0, 2, 101)
        t = 1 - lam / 2
        np.testing.assert_allclose(bank.kernels[0](lam), 1 - t, atol=1e-15)
        np.testing.assert_allclose(bank.kernels[1](lam), t * (1 - t), atol=1e-15)
        np.testing.assert_allclose(bank.kernels[2](lam), t**2, atol=1e-15)

    def test_band_kernels_vanish_at_fixed_point(self):
        bank = make_bank((0.0, 2.0), "diffusion", 5)
        values = bank.evaluate(np.array([0.0]))[:, 0]
        # t = 1 at lambda = 0: every wavelet is zero, the low-pass is one
        np.testing.assert_allclose(values[:-1], 0.0, atol=1e-15)
        assert values[-1] == pytest.approx(1.0)

    def test_band_powers(self):
        bank = make_bank((0.0, 2.0), "diffusion", 6)
        assert [k.params.get("power") for k in bank.kernels] == [None, 1, 2, 4, 8, 16]

    def test_kernels_sum_to_one(self):
        bank = make_bank((-1.0, 1.0), "diffusion", 5)
        np.testing.assert_allclose(bank.evaluate(np.linspace(-1, 1, 200)).sum(axis=0), 1.0, atol=1e-14)

    def test_normalized_adjacency_map(self):
        bank = make_bank((-1.0, 1.0), "diffusion", 3, shift_kind="normalized_adjacency")
        t = (1 + 0.4) / 2
        assert bank.kernels[1](np.array([0.4]))[0] == pytest.approx(t * (1 - t))

    def test_rejects_unnormalized_interval(self):
        with pytest.raises(ValueError, match="normalized"):
            make_bank((0.0, 7.5), "diffusion", 4)


class TestFrameBounds:

    def test_constant_kernel(self):
        bank = bank_from_kernels([FilterKernel("custom", 1, "constant", {"value": 1.0})], (0, 2))
        assert bank.frame_bounds == (1.0, 1.0)
        assert frame_bounds(bank, np.linspace(0, 2, 7)) == (1.0, 1.0)

    def test_degenerate_frame_warns(self):
        bank = _proto([FilterKernel("custom", 1, "identity")])
        with pytest.warns(RuntimeWarning, match="degenerate"):
            a, b = frame_bounds(bank, np.linspace(0, 2, 11))
        assert a == 0.0 and b == pytest.approx(2.0)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_sandwich_on_graph(self, family, rng):
        s = random_shift(40, p=0.15)
        spec = eigendecompose(s)
        bank = make_bank(spec.interval, family, 5)
        a, b = bank.frame_bounds
        for _ in range(100):
            x = rng.standard_normal(40)
            energy = sum(np.sum(apply_filter(spec, k, x) ** 2) for k in bank.kernels)
            xx = x @ x
            assert a**2 * xx <= energy * (1 + 1e-9)
            assert energy <= b**2 * xx * (1 + 1e-9)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_graph_exact_bounds_are_tight(self, family, rng):
        spec = eigendecompose(random_shift(30))
        bank = make_bank(spec.interval, family, 4)
        a, b = bank.operator(spec).frame_bounds()
        i = np.argmax(np.sum(bank.evaluate(spec.eigenvalues) ** 2, axis=0))
        v = spec.basis[:, i]
        energy = sum(np.sum(apply_filter(spec, k, v) ** 2) for k in bank.kernels)
        assert energy == pytest.approx(b**2, rel=1e-12)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            frame_bounds(make_bank((0, 2), "ths", 3), [])


def _proto(kernels):
    return FilterBank(tuple(kernels), (0.0, 2.0), (0.0, 0.0), 0.0)


class TestIntegralLipschitz:

    def test_constant(self):
        assert integral_lipschitz(FilterKernel("custom", 1, "constant", {"value": 3.0}), (0, 2)) == 0.0

    def test_identity_on_0_2(self):
        assert integral_lipschitz(FilterKernel("custom", 1, "identity"), (0, 2)) == pytest.approx(2.0, rel=1e-12)

    def test_non_finite_derivative(self):
        with pytest.raises(ValueError), np.errstate(divide="ignore"):
            integral_lipschitz(lambda lam: 1 / lam, (0.0, 1.0))

    def test_bank_carries_max_over_kernels(self):
        bank = make_bank((0, 2), "mcs", 4)
        assert bank.lipschitz == max(integral_lipschitz(k, bank.interval) for k in bank.kernels)


class TestBank:

    @pytest.mark.parametrize("family", FAMILIES)
    def test_kernels_finite_nonnegative(self, family):
        bank = make_bank((0.0, 2.0), family, 6)
        vals = bank.evaluate(np.linspace(0, 2, 1024))
        assert vals.shape == (6, 1024)
        assert np.all(np.isfinite(vals)) and np.all(vals >= 0)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_json_round_trip(self, family):
        bank = make_bank((0.0, 2.0), family, 5)
        d = json.loads(json.dumps(bank.to_dict()))
        assert set(d) == {"family", "J", "interval", "kernels", "A", "B", "C0"}
        back = FilterBank.from_dict(d)
        lam = np.linspace(0, 2, 300)
        np.testing.assert_array_equal(back.evaluate(lam), bank.evaluate(lam))
        assert back.frame_bounds == bank.frame_bounds and back.lipschitz == bank.lipschitz

    def test_aliases(self):
        assert make_bank((0, 2), "ds", 3).family == "diffusion"
        assert make_bank((0, 2), "mcs", 3).family == "monic_cubic"
        assert make_bank((0, 2), "ths", 3).family == "tight_hann"

    @pytest.mark.parametrize("interval,family,J", [
        ((1.0, 1.0), "ths", 3), ((2.0, 0.0), "ths", 3), ((0, 2), "ths", 1), ((0, 2), "morlet", 3),
    ])
    def test_rejects(self, interval, family, J):
        with pytest.raises(ValueError):
            make_bank(interval, family, J)

    @pytest.mark.parametrize("backend", ["spectral", "poly"])
    def test_operator_shape_and_count(self, backend, rng):
        # diffusion kernels are polynomials of degree <= 4 here, so both backends are exact
        s = random_shift(20)
        spec = eigendecompose(s)
        bank = make_bank(spec.interval, "diffusion", 4, shift_kind=s.kind)
        op = bank.operator(s, backend=backend)
        x = rng.standard_normal(20)
        out = op.apply(x)
        assert out.shape == (4, 20)
        assert op.applications == 4
        for j, k in enumerate(bank.kernels):
            np.testing.assert_allclose(out[j], apply_filter(spec, k, x), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(lo=st.floats(-5, 5), width=st.floats(0.1, 10), J=st.integers(2, 10))
def test_tight_hann_any_interval(lo, width, J):
    bank = make_bank((lo, lo + width), "tight_hann", J)
    assert bank.A == pytest.approx(1.0, abs=1e-6) and bank.B == pytest.approx(1.0, abs=1e-6)
