import numpy as np
import pytest

from bornprec.correction import DenseExactMap, FourierDiagMap, ScalarMap
from bornprec.problems import HelmholtzProblem
from bornprec.spectral import GridSpec, TransformKind
from bornprec.train import (
    LossKind,
    ProbeKind,
    TrainConfig,
    TrainingError,
    closed_form_optimum,
    eval_loss,
    eval_loss_riesz_form,
    loss_gradient,
    replay_probes,
    squared_loss_and_gradient,
    train_map,
    white_probes,
)

from helpers import ALL, _cplx, _rng, helmholtz, newton


def homogeneous(n=32, k0sq=400.0, eta=50.0):
    g = GridSpec(n, n)
    return HelmholtzProblem(np.full(g.shape, k0sq), g, eta=eta)


def probes_for(p, n=6, seed=0):
    return white_probes(p.shape, n, _rng(seed))


class TestEvalLoss:
    @pytest.mark.parametrize("make", ALL)
    def test_exact_inverse_dir(self, make):
        p = make()
        assert eval_loss(LossKind.DIR, p, DenseExactMap.direct_inverse(p), probes_for(p)) <= 1e-10

    @pytest.mark.parametrize("make", ALL)
    def test_exact_born_inverse_bsreta(self, make):
        p = make()
        assert eval_loss(LossKind.BSRETA, p, DenseExactMap.born_inverse(p), probes_for(p)) <= 1e-10

    @pytest.mark.parametrize("kind", list(LossKind))
    def test_zero_map_gives_one(self, kind):
        p = helmholtz()
        assert eval_loss(kind, p, ScalarMap(0.0), probes_for(p)) == 1.0

    def test_empty_and_zero_probes_rejected(self):
        p = helmholtz()
        with pytest.raises(ValueError):
            eval_loss(LossKind.DIR, p, ScalarMap(1.0), np.zeros((0, 8, 8)))
        with pytest.raises(ValueError):
            eval_loss(LossKind.DIR, p, ScalarMap(1.0), np.zeros((8, 8)))

    def test_single_probe_without_batch_axis(self):
        p = helmholtz()
        q = probes_for(p, 1)
        assert eval_loss("bsl2", p, ScalarMap(0.5), q[0]) == eval_loss("bsl2", p, ScalarMap(0.5), q)


class TestRieszForm:
    @pytest.mark.parametrize("make", ALL)
    def test_agrees_with_integral_form(self, make):
        p = make()
        q = white_probes(p.shape, 50, _rng(1))
        m = FourierDiagMap(1 + 0.3 * _cplx(_rng(2), p.shape), p.kind)
        for cmap in (ScalarMap(0.6 + 0.2j), m):
            a = eval_loss(LossKind.BSRETA, p, cmap, q)
            b = eval_loss_riesz_form(p, cmap, q)
            assert abs(a - b) <= 1e-10 * a

    def test_identity_map(self):
        p = newton()
        q = probes_for(p)
        ident = FourierDiagMap.identity(p.grid)
        assert eval_loss("bsreta", p, ident, q) == pytest.approx(eval_loss_riesz_form(p, ident, q), rel=1e-14)

    def test_scale_invariance(self):
        p = helmholtz()
        q = probes_for(p)
        cmap = ScalarMap(0.9)
        for kind in LossKind:
            assert eval_loss(kind, p, cmap, 10 * q) == pytest.approx(eval_loss(kind, p, cmap, q), rel=1e-12)
        assert eval_loss_riesz_form(p, cmap, 10 * q) == pytest.approx(eval_loss_riesz_form(p, cmap, q), rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize("kind", list(LossKind))
    def test_vanishes_at_closed_form_optimum(self, kind):
        p = homogeneous(n=16, k0sq=100.0, eta=20.0)
        opt = closed_form_optimum(kind, p)
        q = probes_for(p)
        assert eval_loss(kind, p, opt, q) <= 1e-12
        assert np.linalg.norm(loss_gradient(kind, p, opt, q)) <= 1e-8

    @pytest.mark.parametrize("make", ALL)
    @pytest.mark.parametrize("kind", list(LossKind))
    def test_central_differences(self, make, kind):
        p = make()
        rng = _rng(3)
        q = probes_for(p, 4)
        m0 = 1 + 0.2 * _cplx(rng, p.shape)
        base = FourierDiagMap(m0, p.kind)
        grad = loss_gradient(kind, p, base, q)
        eps = 1e-6
        for _ in range(10):
            d = rng.standard_normal(base.theta.size)
            lp = squared_loss_and_gradient(kind, p, base.with_theta(base.theta + eps * d), q)[0]
            lm = squared_loss_and_gradient(kind, p, base.with_theta(base.theta - eps * d), q)[0]
            fd = (lp - lm) / (2 * eps)
            assert fd == pytest.approx(grad @ d, rel=1e-5)

    def test_requires_fourier_diag(self):
        p = helmholtz()
        with pytest.raises(TypeError):
            loss_gradient(LossKind.DIR, p, ScalarMap(1.0), probes_for(p))

    def test_empty_batch(self):
        p = helmholtz()
        with pytest.raises(ValueError):
            loss_gradient(LossKind.DIR, p, FourierDiagMap.identity(p.grid), np.zeros((0, 8, 8)))

    def test_closed_form_needs_periodic(self):
        with pytest.raises(ValueError):
            closed_form_optimum(LossKind.DIR, newton())


class TestTrainer:
    def test_homogeneous_bsreta_reaches_low_loss(self):
        res = train_map(LossKind.BSRETA, [homogeneous()], TrainConfig(epochs=200, batch=8))
        assert res.losses[-1] < 0.1
        assert len(res.losses) <= 201

    def test_dir_stays_positive_and_above_bsreta(self):
        cfg = TrainConfig(epochs=200, batch=8)
        bs = train_map(LossKind.BSRETA, [homogeneous()], cfg)
        di = train_map(LossKind.DIR, [homogeneous()], cfg)
        assert di.losses[-1] > 0
        assert di.losses[-1] > bs.losses[-1]

    def test_squared_loss_never_increases(self):
        res = train_map(LossKind.BSL2, [helmholtz(16), helmholtz(16, seed=1)], TrainConfig(epochs=40, batch=4))
        assert np.all(np.diff(res.squared) <= 0)

    def test_zero_epochs_returns_identity(self):
        p = helmholtz()
        res = train_map(LossKind.DIR, [p], TrainConfig(epochs=0))
        np.testing.assert_array_equal(res.cmap.m, 1.0)
        assert len(res.losses) == 1

    def test_three_kinds_give_three_maps(self):
        p = helmholtz(16)
        cfg = TrainConfig(epochs=10, batch=4)
        maps = [train_map(k, [p], cfg).cmap.m for k in LossKind]
        assert not np.allclose(maps[0], maps[1]) and not np.allclose(maps[1], maps[2])

    def test_deterministic(self):
        p = helmholtz(16)
        cfg = TrainConfig(epochs=15, batch=4, seed=3)
        a, b = train_map("bsreta", [p], cfg), train_map("bsreta", [p], cfg)
        np.testing.assert_array_equal(a.cmap.m, b.cmap.m)

    def test_dirichlet_training_keeps_transform_kind(self):
        res = train_map(LossKind.BSRETA, [newton(9)], TrainConfig(epochs=10, batch=4))
        assert res.cmap.kind is TransformKind.DST1
        assert res.losses[-1] <= res.losses[0]

    def test_nan_aborts(self):
        p = helmholtz()
        p.apply_A = lambda u: np.full(np.shape(u), np.nan, dtype=complex)
        with pytest.raises(TrainingError):
            train_map(LossKind.DIR, [p], TrainConfig(epochs=5, batch=2))

    def test_loss_csv(self, tmp_path):
        res = train_map(LossKind.BSRETA, [helmholtz()], TrainConfig(epochs=3, batch=2))
        res.to_csv(tmp_path / "loss.csv")
        lines = (tmp_path / "loss.csv").read_text().splitlines()
        assert lines[0] == "step,loss,step_size" and len(lines) == len(res.losses) + 1

    def test_explicit_probes(self):
        p = helmholtz()
        q = probes_for(p, 3)
        res = train_map(LossKind.BSL2, [p], TrainConfig(epochs=3), probes=[q])
        assert res.losses[0] == pytest.approx(eval_loss(LossKind.BSL2, p, FourierDiagMap.identity(p.grid), q))

    @pytest.mark.parametrize("kw", [dict(epochs=-1), dict(batch=0), dict(step_size=0.0), dict(step_decay=0.0)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_probe_kind_parsed(self):
        assert TrainConfig(probe_kind="replay").probe_kind is ProbeKind.REPLAY


class TestProbes:
    def test_white_probe_statistics(self):
        q = white_probes((16, 16), 50, _rng(4))
        assert q.shape == (50, 16, 16)
        assert np.var(q.real) == pytest.approx(1.0, rel=0.05)
        assert np.var(q.imag) == pytest.approx(1.0, rel=0.05)

    def test_replay_starts_from_source(self):
        p = helmholtz()
        f = _cplx(_rng(5), p.shape)
        buf = replay_probes(p, f, ScalarMap(0.5), steps=4)
        assert buf.shape == (4, 8, 8)
        np.testing.assert_allclose(buf[0], f)
