import numpy as np
import pytest

from ppdiag import (EnvelopeSpec, FirstOrder, GibbsModel, PointPattern,
                    envelope, k_hat, sample_poisson, unit_square)


@pytest.fixture()
def csr_null():
    return GibbsModel(FirstOrder.constant(np.log(60.0)))


class TestEnvelope:
    def test_constant_diagnostic(self, square, csr_null):
        r = np.linspace(0, 0.1, 5)

        def diag(pattern, model):
            return np.full(len(r), 7.0)

        t = envelope(diag, csr_null, square, r,
                     EnvelopeSpec(n_sims=25, seed=1))
        assert np.allclose(t["lo"], 7.0)
        assert np.allclose(t["hi"], 7.0)
        assert np.allclose(t["mean"], 7.0)

    def test_band_ordering(self, square, csr_null):
        r = np.linspace(0, 0.125, 9)

        def diag(pattern, model):
            return k_hat(pattern, r, "translation") if pattern.n >= 2 \
                else np.zeros(len(r))

        t = envelope(diag, csr_null, square, r,
                     EnvelopeSpec(n_sims=99, seed=2))
        assert (t["lo"] <= t["mean"] + 1e-12).all()
        assert (t["mean"] <= t["hi"] + 1e-12).all()

    def test_determinism_and_parallel_agreement(self, square, csr_null):
        r = np.linspace(0, 0.1, 4)

        def diag(pattern, model):
            return np.repeat(float(pattern.n), len(r))

        a = envelope(diag, csr_null, square, r, EnvelopeSpec(n_sims=30, seed=5))
        b = envelope(diag, csr_null, square, r, EnvelopeSpec(n_sims=30, seed=5))
        assert np.array_equal(a["lo"], b["lo"])
        assert np.array_equal(a["hi"], b["hi"])
        c = envelope(diag, csr_null, square, r,
                     EnvelopeSpec(n_sims=30, seed=5, n_jobs=2))
        assert np.array_equal(a["lo"], c["lo"])
        assert np.array_equal(a["mean"], c["mean"])

    def test_dropped_replicates_accounting(self, square, csr_null):
        r = np.linspace(0, 0.1, 3)
        calls = {"k": 0}

        def diag(pattern, model):
            calls["k"] += 1
            if calls["k"] == 3:
                raise RuntimeError("boom")
            return np.zeros(len(r))

        with pytest.warns(RuntimeWarning, match="dropped"):
            t = envelope(diag, csr_null, square, r,
                         EnvelopeSpec(n_sims=40, seed=3))
        assert t.meta["dropped"] == 1

        def always_fail(pattern, model):
            raise RuntimeError("boom")

        with pytest.raises(RuntimeError, match="replicates failed"):
            envelope(always_fail, csr_null, square, r,
                     EnvelopeSpec(n_sims=20, seed=3))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            EnvelopeSpec(n_sims=10)
        with pytest.raises(ValueError):
            EnvelopeSpec(lo=0.9, hi=0.1)

    def test_rank_calibration(self, square):
        """Exchangeability: data exceeds the upper envelope with probability
        close to 1 - hi at a fixed argument."""
        null = GibbsModel(FirstOrder.constant(np.log(60.0)))
        r = np.array([0.0, 0.08])
        spec = EnvelopeSpec(n_sims=199, lo=0.025, hi=0.975)

        def diag(pattern, model):
            if pattern.n < 2:
                return np.zeros(2)
            return k_hat(pattern, r, "translation")

        n_trials = 800
        exceed = 0
        rng_outer = np.random.SeedSequence(99)
        kids = rng_outer.spawn(n_trials)
        for k, kid in enumerate(kids):
            data = sample_poisson(60.0, square, kid)
            t = envelope(diag, null, square, r,
                         EnvelopeSpec(199, 0.025, 0.975, False,
                                      int(kid.generate_state(1)[0]) ^ 0x5a5a),
                         data_pattern=data)
            exceed += t["data"][1] > t["hi"][1]
        rate = exceed / n_trials
        assert abs(rate - 0.025) < 0.015, rate
