"""The built-in check suite: clean pass, and fault injection to prove the
checks actually catch the defects they claim to guard against."""

from __future__ import annotations

import numpy as np
import pytest

from adg import binning, geometry, verify


def _result(name):
    for got_name, ok, detail in verify.run_all():
        if got_name == name:
            return ok, detail
    raise AssertionError(f"check {name} not found")


class TestCleanRun:
    def test_all_checks_pass(self):
        results = verify.run_all()
        assert len(results) == 9
        failing = [(n, d) for n, ok, d in results if not ok]
        assert not failing, failing

    def test_check_names_are_stable(self):
        names = [name for name, _, _ in verify.run_all()]
        assert names == [
            "dispersion_identity",
            "hand_constants",
            "eigen_oracle",
            "translation_invariance",
            "rotation_invariance",
            "rescale_stability",
            "quota_exactness",
            "degenerate_bins",
            "determinism",
        ]


class TestFaultInjection:
    def test_skipping_centering_is_caught(self, monkeypatch):
        """An uncentered gram must fail the dispersion-identity and
        translation-invariance checks."""
        real_kernel = geometry.gram_kernel

        def uncentered_kernel(unit_block):
            block = np.asarray(unit_block, dtype=np.float64)
            grams = np.einsum("bik,bjk->bij", block, block, optimize=False)
            grams = (grams + grams.transpose(0, 2, 1)) * 0.5
            mu = block.mean(axis=1)
            mean_sq = np.einsum("bd,bd->b", mu, mu, optimize=False)
            traces = np.einsum("bii->b", grams, optimize=False)
            return grams, mean_sq, traces

        monkeypatch.setattr(geometry, "gram_kernel", uncentered_kernel)
        ok_identity, _ = _result("dispersion_identity")
        ok_translation, _ = _result("translation_invariance")
        assert not ok_identity
        assert not ok_translation
        monkeypatch.setattr(geometry, "gram_kernel", real_kernel)
        ok_identity, _ = _result("dispersion_identity")
        assert ok_identity

    def test_naive_quota_rounding_is_caught(self, monkeypatch):
        """round(budget * size / total) must fail the worked example
        (5, 5) with budget 3, where both shares are exactly 1.5."""

        def rounding_quotas(bin_sizes, budget):
            sizes = np.asarray(bin_sizes, dtype=np.int64)
            total = int(sizes.sum())
            quotas = np.array(
                [round(budget * int(s) / total) for s in sizes], dtype=np.int64
            )
            return binning.QuotaTable(quotas=quotas, budget=budget)

        monkeypatch.setattr(binning, "allocate_quotas", rounding_quotas)
        ok, detail = _result("quota_exactness")
        assert not ok
        assert "5" in detail

    def test_unsorted_eigenvalues_are_caught(self, monkeypatch):
        """Ascending spectra must fail the eigen oracle."""
        from adg import scoring

        real = scoring.eig_symmetric

        def ascending(gram, config=None, *, return_vectors=False):
            out = real(gram, config, return_vectors=return_vectors)
            if return_vectors:
                spectrum, vectors = out
                flipped = scoring.EigenSpectrum(
                    values=tuple(reversed(spectrum.values)),
                    residual=spectrum.residual,
                )
                return flipped, vectors[:, ::-1]
            return scoring.EigenSpectrum(
                values=tuple(reversed(out.values)), residual=out.residual
            )

        monkeypatch.setattr(scoring, "eig_symmetric", ascending)
        ok, _ = _result("eigen_oracle")
        assert not ok

    def test_biased_tie_break_is_caught(self, monkeypatch):
        """Distributing remainder units to the highest bin index instead of
        the largest remainder must fail the exact-rational comparison."""

        def biased_quotas(bin_sizes, budget):
            sizes = np.asarray(bin_sizes, dtype=np.int64)
            total = int(sizes.sum())
            prod = budget * sizes
            quotas = prod // total
            deficit = budget - int(quotas.sum())
            if deficit > 0:
                quotas[np.argsort(sizes)[-deficit:]] += 1
            return binning.QuotaTable(quotas=quotas.astype(np.int64), budget=budget)

        monkeypatch.setattr(binning, "allocate_quotas", biased_quotas)
        ok, _ = _result("quota_exactness")
        assert not ok
