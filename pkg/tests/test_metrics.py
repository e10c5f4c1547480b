"""PSNR/SSIM/MS-SSIM against straight-from-definition oracles."""

import numpy as np
import pytest

from lumidec.data import dihedral
from lumidec.errors import ContractError, DimensionError
from lumidec.metrics import (
    PSNR_CAP_DB,
    MetricReport,
    evaluate_dataset,
    mean_color_angle,
    ms_ssim,
    psnr,
    ssim,
)

from oracles import color_angle_reference, msssim_reference, psnr_reference, ssim_reference


def rand_img(rng, h=64, w=64):
    return rng.random((1, 3, h, w))


def gray_pair(rng, h=64, w=64):
    a = rand_img(rng, h, w)
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    return a, b


class TestPsnr:
    def test_identical_images_hit_cap(self, rng):
        a = rand_img(rng)
        assert psnr(a, a) == PSNR_CAP_DB

    def test_uniform_difference(self):
        a = np.full((1, 3, 8, 8), 0.5)
        b = np.full((1, 3, 8, 8), 0.6)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_matches_oracle(self, rng):
        for _ in range(5):
            a, b = rand_img(rng), rand_img(rng)
            assert psnr(a, b) == pytest.approx(psnr_reference(a, b), abs=1e-6)

    def test_exact_slope_per_decade(self):
        a = np.full((1, 3, 8, 8), 0.5)
        last = None
        for err in (0.001, 0.01, 0.1):
            val = psnr(a, a + err)
            if last is not None:
                assert last - val == pytest.approx(20.0, abs=1e-6)
            last = val

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(DimensionError):
            psnr(rand_img(rng, 8, 8), rand_img(rng, 8, 9))


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        a = rand_img(rng)
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-6)

    def test_symmetry(self, rng):
        a, b = gray_pair(rng)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-9)

    def test_inversion_scores_low(self, rng):
        # push values away from mid-gray so 1-x really differs
        a = np.where(rand_img(rng) > 0.5, 0.9, 0.1)
        assert ssim(a, 1.0 - a) < 0.2

    def test_matches_reference_oracle(self, rng):
        for _ in range(5):
            a, b = gray_pair(rng)
            ga = a[0].mean(axis=0)
            gb = b[0].mean(axis=0)
            assert ssim(a, b) == pytest.approx(ssim_reference(ga, gb), abs=1e-4)

    def test_matches_skimage(self, rng):
        skimage_metrics = pytest.importorskip("skimage.metrics")
        a, b = gray_pair(rng)
        want = skimage_metrics.structural_similarity(
            a[0].mean(axis=0),
            b[0].mean(axis=0),
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            data_range=1.0,
        )
        assert ssim(a, b) == pytest.approx(want, abs=1e-4)

    def test_window_contract(self, rng):
        with pytest.raises(ContractError):
            ssim(rand_img(rng, 8, 8), rand_img(rng, 8, 8))


class TestMsSsim:
    def test_self_similarity_is_one(self, rng):
        a = rand_img(rng, 176, 176)
        assert ms_ssim(a, a) == pytest.approx(1.0, abs=1e-6)

    def test_monotone_noise_degradation(self, rng):
        a = rand_img(rng, 176, 176)
        vals = []
        for sigma in (0.01, 0.05, 0.1):
            b = np.clip(a + rng.normal(0, sigma, a.shape), 0, 1)
            vals.append(ms_ssim(a, b))
        assert vals[0] > vals[1] > vals[2]

    def test_bounded_on_random_pairs(self):
        for seed in range(50):
            r = np.random.default_rng(seed)
            a, b = r.random((1, 3, 45, 45)), r.random((1, 3, 45, 45))
            v = ms_ssim(a, b)
            assert 0.0 <= v <= 1.0

    def test_matches_reference_oracle(self, rng):
        for _ in range(3):
            a, b = gray_pair(rng, 176, 176)
            want = msssim_reference(a[0].mean(axis=0), b[0].mean(axis=0))
            assert ms_ssim(a, b) == pytest.approx(want, abs=1e-4)

    def test_small_images_reduce_scales(self, rng):
        a, b = gray_pair(rng, 64, 64)
        v = ms_ssim(a, b)  # 64 -> 3 scales usable
        want = msssim_reference(
            a[0].mean(axis=0), b[0].mean(axis=0), weights=np.asarray((0.0448, 0.2856, 0.3001)) / 0.6305
        )
        assert v == pytest.approx(want, abs=1e-4)

    def test_tiny_images_fall_back_to_ssim(self, rng):
        a, b = gray_pair(rng, 16, 16)
        assert ms_ssim(a, b) == pytest.approx(ssim(a, b), abs=1e-9)


class TestDihedralInvariance:
    def test_ssim_and_msssim_invariant_under_joint_transforms(self, rng):
        a, b = gray_pair(rng, 176, 176)
        base_ssim = ssim(a, b)
        base_ms = ms_ssim(a, b)
        for code in range(8):
            ta = dihedral(a, code)
            tb = dihedral(b, code)
            assert ssim(ta, tb) == pytest.approx(base_ssim, abs=1e-4)
            assert ms_ssim(ta, tb) == pytest.approx(base_ms, abs=1e-4)


class TestColorAngle:
    def test_matches_reference(self, rng):
        a, b = rand_img(rng), rand_img(rng)
        assert mean_color_angle(a, b) == pytest.approx(color_angle_reference(a, b), abs=1e-9)


class TestEvaluateDataset:
    def test_identity_enhancer_on_clean_pairs(self, tmp_path, rng):
        from lumidec.data import save_png, scan_dataset

        (tmp_path / "low").mkdir()
        (tmp_path / "high").mkdir()
        for i in range(4):
            arr = rng.random((1, 3, 32, 32)).astype(np.float32)
            save_png(arr, tmp_path / "low" / f"{i}.png")
            save_png(arr, tmp_path / "high" / f"{i}.png")
        report = evaluate_dataset(lambda x: x, scan_dataset(tmp_path))
        assert len(report.rows) == 4
        assert report.mean("psnr_db") == PSNR_CAP_DB
        assert report.mean("ssim") == pytest.approx(1.0, abs=1e-6)

    def test_row_count_and_csv(self, tmp_path, rng, paired_fixture_dir):
        from lumidec.data import scan_dataset

        samples = scan_dataset(paired_fixture_dir)
        csv_path = tmp_path / "report.csv"
        report = evaluate_dataset(lambda x: np.clip(x * 1.5, 0, 1), samples, csv_path=csv_path)
        assert len(report.rows) == len(samples)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "# gray_mode=mean"
        assert lines[1].split(",") == ["filename", "psnr_db", "ssim", "ms_ssim", "color_angle_deg", "flags"]
        assert len(lines) == 2 + len(samples)

    def test_one_failure_does_not_sink_the_run(self, tmp_path, rng, paired_fixture_dir):
        from lumidec.data import scan_dataset

        samples = scan_dataset(paired_fixture_dir)
        calls = {"n": 0}

        def flaky(x):
            calls["n"] += 1
            if calls["n"] == 2:
                raise RuntimeError("boom")
            return x

        report = evaluate_dataset(flaky, samples)
        assert len(report.rows) == len(samples)
        failed = [r for r in report.rows if r.flags.startswith("failed")]
        assert len(failed) == 1
        assert len(report.ok_rows) == len(samples) - 1
