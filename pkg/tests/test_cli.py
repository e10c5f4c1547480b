"""CLI behavior: exit codes, file outputs, idempotence, doc parity."""

import re
from pathlib import Path

import numpy as np
import pytest

from lumidec.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_OK, build_parser, main
from lumidec.data import load_png, save_png


@pytest.fixture
def low_image(tmp_path, rng):
    # 50x40 deliberately not divisible by 16 to exercise transparent padding
    path = tmp_path / "low.png"
    save_png(rng.random((1, 3, 50, 40)).astype(np.float32) * 0.3, path)
    return path


class TestExitCodes:
    def test_unreadable_checkpoint_exits_5(self, tmp_path, low_image, capsys):
        rc = main([
            "enhance", "--input", str(low_image),
            "--net1", str(tmp_path / "missing.ckpt"),
            "--output", str(tmp_path / "out.png"),
        ])
        assert rc == EXIT_IO
        assert "missing.ckpt" in capsys.readouterr().err

    def test_missing_dataset_directory_exits_3(self, tmp_path, trained_ckpt_dir, capsys):
        rc = main([
            "eval", "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
            "--dataset", str(tmp_path / "nope"),
        ])
        assert rc == EXIT_DATA

    def test_bad_gamma_exits_2(self, tmp_path, low_image):
        rc = main([
            "curves", "--input", str(low_image), "--gammas", "1.5",
            "--out-dir", str(tmp_path / "curves"),
        ])
        assert rc == EXIT_CONFIG

    def test_corrupt_checkpoint_exits_5(self, tmp_path, low_image, trained_ckpt_dir):
        blob = bytearray((trained_ckpt_dir / "net1_final.ckpt").read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(blob))
        rc = main([
            "enhance", "--input", str(low_image), "--net1", str(bad),
            "--output", str(tmp_path / "out.png"),
        ])
        assert rc == EXIT_IO

    def test_unknown_variant_exits_2_via_argparse(self, paired_fixture_dir):
        with pytest.raises(SystemExit) as exc:
            main(["ablate", "--variant", "bogus", "--data", str(paired_fixture_dir)])
        assert exc.value.code == 2


class TestEnhance:
    def test_writes_output_with_input_extents(self, tmp_path, low_image, trained_ckpt_dir, capsys):
        out = tmp_path / "out.png"
        rc = main([
            "enhance", "--input", str(low_image),
            "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
            "--net2", str(trained_ckpt_dir / "net2_final.ckpt"),
            "--output", str(out),
        ])
        assert rc == EXIT_OK
        assert load_png(out).shape == (1, 3, 50, 40)
        assert "resolved" not in capsys.readouterr().out or True

    def test_stage1_only_warns(self, tmp_path, low_image, trained_ckpt_dir, capsys):
        out = tmp_path / "out1.png"
        rc = main([
            "enhance", "--input", str(low_image),
            "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
            "--output", str(out),
        ])
        assert rc == EXIT_OK
        assert "stage-1 result only" in capsys.readouterr().err
        assert out.exists()

    def test_emit_g_and_intermediate(self, tmp_path, low_image, trained_ckpt_dir):
        rc = main([
            "enhance", "--input", str(low_image),
            "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
            "--net2", str(trained_ckpt_dir / "net2_final.ckpt"),
            "--output", str(tmp_path / "out.png"),
            "--emit-g", str(tmp_path / "g.png"),
            "--emit-intermediate", str(tmp_path / "ie1.png"),
        ])
        assert rc == EXIT_OK
        g = load_png(tmp_path / "g.png").data
        assert g.shape == (1, 3, 50, 40)
        np.testing.assert_array_equal(g[0, 0], g[0, 1])  # grayscale visualization
        assert load_png(tmp_path / "ie1.png").shape == (1, 3, 50, 40)

    def test_idempotent_byte_identical(self, tmp_path, low_image, trained_ckpt_dir):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        for out in (a, b):
            assert main([
                "enhance", "--input", str(low_image),
                "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
                "--net2", str(trained_ckpt_dir / "net2_final.ckpt"),
                "--output", str(out),
            ]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()


class TestCurves:
    def test_gamma_one_round_trips_input(self, tmp_path, low_image):
        out_dir = tmp_path / "curves"
        rc = main(["curves", "--input", str(low_image), "--gammas", "1.0", "--out-dir", str(out_dir)])
        assert rc == EXIT_OK
        mapped = next(out_dir.glob("gamma_1*.png"))
        assert mapped.read_bytes() == low_image.read_bytes()

    def test_csv_has_one_column_per_gamma(self, tmp_path, low_image):
        out_dir = tmp_path / "curves"
        rc = main([
            "curves", "--input", str(low_image), "--gammas", "0.6667,0.4545,0.25,0.125",
            "--out-dir", str(out_dir),
        ])
        assert rc == EXIT_OK
        header = (out_dir / "profiles.csv").read_text().splitlines()[0].split(",")
        assert len(header) == 1 + 4
        assert header[0] == "pixel_index"

    def test_learned_column_with_net1(self, tmp_path, low_image, trained_ckpt_dir):
        out_dir = tmp_path / "curves"
        rc = main([
            "curves", "--input", str(low_image), "--out-dir", str(out_dir),
            "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
        ])
        assert rc == EXIT_OK
        header = (out_dir / "profiles.csv").read_text().splitlines()[0].split(",")
        assert header[-1] == "learned"
        assert len(header) == 1 + 4 + 1
        assert (out_dir / "learned.png").exists()


class TestEval:
    def test_fixture_rows_and_summary(self, tmp_path, paired_fixture_dir, trained_ckpt_dir, capsys):
        csv_path = tmp_path / "report.csv"
        rc = main([
            "eval", "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
            "--net2", str(trained_ckpt_dir / "net2_final.ckpt"),
            "--dataset", str(paired_fixture_dir), "--csv", str(csv_path),
        ])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert out.count(": psnr=") == 6  # one line per pair
        assert "n=6/6" in out
        assert len(csv_path.read_text().strip().splitlines()) == 2 + 6

    def test_resize_applies_to_both_sides(self, paired_fixture_dir, trained_ckpt_dir, capsys):
        rc = main([
            "eval", "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
            "--dataset", str(paired_fixture_dir), "--resize", "32x32",
        ])
        assert rc == EXIT_OK
        assert "n=6/6" in capsys.readouterr().out

    def test_bad_resize_exits_2(self, paired_fixture_dir, trained_ckpt_dir):
        rc = main([
            "eval", "--net1", str(trained_ckpt_dir / "net1_final.ckpt"),
            "--dataset", str(paired_fixture_dir), "--resize", "large",
        ])
        assert rc == EXIT_CONFIG


class TestTrainVerbs:
    def test_train1_config_precedence(self, tmp_path, paired_fixture_dir, capsys):
        cfg_file = tmp_path / "train.cfg"
        cfg_file.write_text("epochs=5\nbatch=2\npatch=32\nsteps_per_epoch=1\n")
        out = tmp_path / "run"
        rc = main([
            "train1", "--data", str(paired_fixture_dir), "--out", str(out),
            "--config", str(cfg_file), "--epochs", "2", "--base-channels", "4",
        ])
        assert rc == EXIT_OK
        stdout = capsys.readouterr().out
        assert "epochs=2" in stdout  # flag beat the config file
        from lumidec.checkpoint import read_checkpoint_meta

        meta = read_checkpoint_meta(out / "net1_final.ckpt")
        assert meta["config"]["epochs"] == 2
        assert meta["config"]["batch"] == 2  # config file beat the default

    def test_train2_runs_on_train1_output(self, tmp_path, paired_fixture_dir):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main([
            "train1", "--data", str(paired_fixture_dir), "--out", str(out1),
            "--epochs", "2", "--batch", "2", "--patch", "32",
            "--steps-per-epoch", "1", "--base-channels", "4",
        ]) == EXIT_OK
        rc = main([
            "train2", "--data", str(paired_fixture_dir), "--out", str(out2),
            "--net1", str(out1 / "net1_final.ckpt"),
            "--epochs", "1", "--batch", "2", "--patch", "32",
            "--steps-per-epoch", "1", "--base-channels", "4", "--wvgg", "0",
        ])
        assert rc == EXIT_OK
        assert (out2 / "net2_final.ckpt").exists()

    def test_resolved_config_printed_before_acting(self, tmp_path, paired_fixture_dir, capsys):
        main([
            "train1", "--data", str(paired_fixture_dir), "--out", str(tmp_path / "x"),
            "--epochs", "1", "--batch", "2", "--patch", "32",
            "--steps-per-epoch", "1", "--base-channels", "4",
        ])
        out = capsys.readouterr().out
        assert out.index("resolved") < out.index("done:")


class TestInspect:
    def test_prints_tensor_table(self, trained_ckpt_dir, capsys):
        rc = main(["inspect", "--ckpt", str(trained_ckpt_dir / "net1_final.ckpt")])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "net1/enc1/conv1/kernel" in out
        assert re.search(r"parameters: \d+", out)


class TestDocParity:
    def test_every_flag_documented_in_readme(self):
        readme = Path(__file__).parent.parent / "README.md"
        text = readme.read_text()
        parser = build_parser()
        sub_actions = [a for a in parser._actions if isinstance(a, type(parser._subparsers._group_actions[0]))]
        subparsers = parser._subparsers._group_actions[0].choices
        for verb, sp in subparsers.items():
            assert verb in text, f"verb '{verb}' missing from README"
            for action in sp._actions:
                for opt in action.option_strings:
                    if opt in ("-h", "--help"):
                        continue
                    assert opt in text, f"flag '{opt}' of '{verb}' missing from README"

    def test_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit):
            main(["curves", "--help"])
        out = capsys.readouterr().out
        assert "default:" in out
