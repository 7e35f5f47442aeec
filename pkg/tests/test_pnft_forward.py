import numpy as np
import pytest
from scipy.signal import resample

from pnft.finite_gap import evaluate_solution
from pnft.pnft_forward import (ForwardError, SpectrumEstimate, auto_search_box,
                               discriminant_with_derivative, find_main_spectrum,
                               floquet_discriminant, monodromy, reduce_spectrum)

T = 2 * np.pi


def const(A, n=256):
    return np.full(n, A, complex), T / n


@pytest.mark.parametrize("A", [0.5, 1.0, 2.0])
def test_constant_potential_discriminant(A):
    q, dt = const(A)
    x, y = np.meshgrid(np.linspace(-2, 2, 20), np.linspace(0.01, 2.5, 20))
    lam = x + 1j * y
    ref = np.cos(T * np.sqrt(lam ** 2 + A ** 2))
    # |Delta| grows like exp(T Im k); the error is measured relative to max(1, |Delta|)
    err = np.abs(floquet_discriminant(q, dt, lam) - ref) / np.maximum(1.0, np.abs(ref))
    assert np.max(err) < 1e-8
    # at lambda = iA the wavenumber vanishes (series branch of the kernel)
    assert abs(floquet_discriminant(q, dt, 1j * A) - 1) < 1e-12


@pytest.mark.parametrize("A", [0.5, 1.0, 2.0])
def test_constant_potential_main_spectrum(A):
    q, dt = const(A)
    n = np.arange(0, int(2 * A * T / (2 * np.pi)) + 1)
    arg = A ** 2 - (n * np.pi / T) ** 2
    expected = np.sort(np.sqrt(arg[arg > 1e-12]))
    box = (-A - 1, A + 1, 0.0, A + 0.5)
    est = find_main_spectrum(q, dt, box, (60, 40))
    got = np.sort(est.points.imag)
    assert len(est.points) == len(expected)
    assert np.max(np.abs(got - expected)) < 1e-6
    assert np.max(np.abs(est.points.real)) < 1e-6
    assert np.all(est.residuals < 1e-9)


def test_free_evolution():
    q = np.zeros(64, complex)
    lam = np.array([0.3, 1.1 + 0.2j])
    assert np.allclose(floquet_discriminant(q, 0.1, lam), np.cos(lam * 6.4), atol=1e-13)
    assert abs(abs(floquet_discriminant(q, 0.1, np.pi / 6.4)) - 1) < 1e-13


def test_unimodular(rng):
    q = rng.normal(size=100) + 1j * rng.normal(size=100)
    for lam in (0.2 + 0.7j, -1.3 + 0.1j, 2.5j):
        assert abs(monodromy(q, 0.03, lam).det - 1) < 1e-8


def test_conjugation_symmetry(rng):
    q = rng.normal(size=64) + 1j * rng.normal(size=64)
    lam = 0.3 + 0.4j
    d = floquet_discriminant(q, 0.05, lam)
    assert abs(floquet_discriminant(q, 0.05, np.conj(lam)) - np.conj(d)) < 1e-12
    # reflection about the imaginary axis is not a symmetry for asymmetric q
    assert abs(floquet_discriminant(q, 0.05, -np.conj(lam)) - np.conj(d)) > 1e-3


def test_derivative_against_difference(rng):
    q = rng.normal(size=128) + 1j * rng.normal(size=128)
    lam, h = 0.4 + 0.3j, 1e-6
    _, dD = discriminant_with_derivative(q, 0.02, lam)
    fd = (floquet_discriminant(q, 0.02, lam + h) - floquet_discriminant(q, 0.02, lam - h)) / (2 * h)
    assert abs(dD - fd) < 1e-6 * max(1, abs(fd))


def test_errors():
    with pytest.raises(ForwardError):
        monodromy([], 0.1, 1j)
    with pytest.raises(ForwardError):
        find_main_spectrum(np.ones(8), 0.1, (-1, 1, -0.5, 1))


def test_reduce_spectrum():
    est = SpectrumEstimate(np.array([0.1j, 0.5 + 0.4j, -0.5 + 0.4j, 0.9j, 0.2j]), np.zeros(5))
    r = reduce_spectrum(est, 3)
    assert list(r.points) == [0.9j, -0.5 + 0.4j, 0.5 + 0.4j] and not r.shortfall
    assert list(reduce_spectrum(r, 3).points) == list(r.points)
    short = reduce_spectrum(SpectrumEstimate(np.array([1j, 0.5j]), np.zeros(2)), 3)
    assert len(short) == 2 and short.shortfall


def _body(sym, period, n):
    t = np.arange(n) * period / n
    return evaluate_solution(sym.params, 0.0, t)


def test_round_trip(table):
    box = auto_search_box(np.concatenate(table.spectra()))
    for s in table.symbols:
        x = _body(s, table.body_period, 1024)
        est = reduce_spectrum(find_main_spectrum(x, table.body_period / 1024, box), 3)
        ref = np.array(s.spectrum.points)
        assert len(est) == 3
        for p in ref:
            assert np.min(np.abs(est.points - p)) < 1e-2


def test_invariances(table):
    s = table.symbols[2]
    n = 1024
    x = _body(s, table.body_period, n)
    dt = table.body_period / n
    box = auto_search_box(np.concatenate(table.spectra()))
    seeds = np.array(s.spectrum.points)
    base = reduce_spectrum(find_main_spectrum(x, dt, box, extra_seeds=seeds), 3).points
    for y in (np.roll(x, 137), x * np.exp(0.83j)):
        p = reduce_spectrum(find_main_spectrum(y, dt, box, extra_seeds=seeds), 3).points
        assert max(np.min(np.abs(p - b)) for b in base) < 1e-6


def test_oversampling_consistency(table):
    s = table.symbols[0]
    box = auto_search_box(np.concatenate(table.spectra()))
    T = table.body_period
    coarse = s.body_samples
    fine = resample(coarse, 1024)
    a = reduce_spectrum(find_main_spectrum(coarse, T / len(coarse), box), 3).points
    b = reduce_spectrum(find_main_spectrum(fine, T / 1024, box), 3).points
    assert max(np.min(np.abs(a - p)) for p in b) < 1e-2
