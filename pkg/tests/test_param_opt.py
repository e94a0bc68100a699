import numpy as np
import pytest

from conftest import make_script
from mv3c.codestream import EncoderConfig
from mv3c.errors import ArgumentError, OracleError
from mv3c.param_opt import (
    OracleSpec,
    degradation,
    least_significant_subband,
    lower_corner_sweep,
    run_oracle,
    select_qs,
    upper_corner_sweep,
)
from mv3c.volume_io import Volume, synth_phantom, write_raw

CFG53 = EncoderConfig(wavelet="legall-5-3", levels=2)
PSNR, MAE = OracleSpec("builtin-psnr", epsilon=0.0), OracleSpec("builtin-mae", epsilon=0.0)


def test_lossless_lower_sweep_exact_oracle(noisy32):
    res = lower_corner_sweep(noisy32, CFG53, [1], MAE)
    assert res.selected == 1 and res.rows[0][2] == 0.0 and res.reference == 0.0


def test_lower_sweep_selects_with_epsilon(noisy32):
    base = lower_corner_sweep(noisy32, CFG53, [1, 2, 4, 8, 16, 32], PSNR)
    scores = [s for _, _, s in base.rows]
    assert scores == sorted(scores, reverse=True)
    # epsilon between the degradations at 8 and 16 admits exactly q <= 8
    d8, d16 = (degradation(base.reference, s) for s in scores[3:5])
    eps = 0.5 * (d8 + d16)
    res = lower_corner_sweep(noisy32, CFG53, [1, 2, 4, 8, 16, 32], OracleSpec("builtin-psnr", epsilon=eps))
    assert res.selected == 8


def test_nothing_admissible(noisy32):
    res = lower_corner_sweep(noisy32, CFG53, [4, 8], MAE)
    assert res.selected is None


def test_select_qs_and_degradation():
    rows = [(1, 1, 10.0), (2, 2, 9.9), (4, 3, 9.0)]
    assert select_qs(rows, 10.0, 0.02) == 2
    assert select_qs(rows, 10.0, 0.2) == 4
    assert select_qs(rows, 10.0, 0.0) == 1
    assert degradation(0.0, -0.3) == pytest.approx(0.3)
    assert degradation(-2.0, -3.0) == pytest.approx(0.5)


def test_epsilon_monotone(noisy32):
    cands = [1, 2, 4, 8, 16]
    res = lower_corner_sweep(noisy32, CFG53, cands, PSNR)
    picks = [select_qs(res.rows, res.reference, e) for e in (0.0, 0.89, 0.9, 0.91, 0.95, 1.0)]
    vals = [p or 0 for p in picks]
    assert vals == sorted(vals)


def _x_only_volume():
    rng = np.random.default_rng(0)
    row = rng.integers(0, 4000, 16).astype(np.int16)
    return Volume(np.broadcast_to(row, (16, 16, 16)).copy(), "int16")


def test_upper_sweep_zero_subband_selects_largest():
    v = _x_only_volume()
    res = upper_corner_sweep(v, CFG53, 1.0, [1, 4, 16, 64], MAE)
    assert res.selected == 64
    assert res.subband == 14  # all-zero ties resolve to the finest HHH
    assert all(s == 0.0 for _, _, s in res.rows)


def test_least_significant_tie_break():
    class S:
        def __init__(self, std):
            self.std = std
    assert least_significant_subband([S(3), S(0), S(1), S(0)]) == 3
    assert least_significant_subband([S(2), S(1)]) == 1


def test_upper_sweep_at_qmin_matches_lower(noisy32):
    lower = lower_corner_sweep(noisy32, CFG53, [2], PSNR)
    upper = upper_corner_sweep(noisy32, CFG53, 2.0, [2], PSNR)
    assert upper.rows[0][2] == pytest.approx(lower.rows[0][2])


def test_upper_sweep_monotone(noisy32):
    res = upper_corner_sweep(noisy32, CFG53, 1.0, [1, 2, 4, 8, 16, 32, 64], PSNR)
    scores = [s for _, _, s in res.rows]
    assert all(b <= a + 1e-9 for a, b in zip(scores, scores[1:]))


def test_sweep_deterministic(noisy32):
    a = lower_corner_sweep(noisy32, None, [2, 8], PSNR)
    b = lower_corner_sweep(noisy32, None, [2, 8], PSNR)
    assert a.rows == b.rows


def test_multiple_volumes_average(noisy32, blobs32):
    res = lower_corner_sweep([noisy32, blobs32], CFG53, [4], PSNR)
    one = lower_corner_sweep(noisy32, CFG53, [4], PSNR).rows[0][2]
    two = lower_corner_sweep(blobs32, CFG53, [4], PSNR).rows[0][2]
    assert res.rows[0][2] == pytest.approx((one + two) / 2)


@pytest.mark.parametrize("cands", [[], [2, 1], [0.5, 2], [2, 2]])
def test_bad_candidates(noisy32, cands):
    with pytest.raises(ArgumentError):
        lower_corner_sweep(noisy32, CFG53, cands, PSNR)


def test_oracle_parse():
    o = OracleSpec.parse("cmd:myscore --mode fast")
    assert o.kind == "external-command" and o.command == "myscore"
    assert o.args == ("--mode", "fast", "{orig}", "{recon}")
    assert OracleSpec.parse("cmd:s {recon} {orig}").args == ("{recon}", "{orig}")
    assert OracleSpec.parse("mae").kind == "builtin-mae"
    with pytest.raises(ArgumentError):
        OracleSpec.parse("ssim")
    with pytest.raises(ArgumentError):
        OracleSpec("builtin-psnr", epsilon=-1)


class TestExternalOracle:
    @pytest.fixture
    def paths(self, tmp_path):
        v = synth_phantom("constant", (4, 4, 4))
        a, b = tmp_path / "a.raw", tmp_path / "b.raw"
        write_raw(v, a)
        write_raw(v, b)
        return a, b

    def _oracle(self, tmp_path, body, timeout=30):
        script = make_script(tmp_path / "oracle.py", body)
        return OracleSpec("external-command", str(script), timeout=timeout)

    def test_builtin_identical(self, paths):
        assert run_oracle(OracleSpec(), *paths) == 999.0

    def test_prints_number(self, tmp_path, paths):
        o = self._oracle(tmp_path, "print('0.834')\n")
        assert run_oracle(o, *paths) == 0.834

    def test_receives_paths(self, tmp_path, paths):
        o = self._oracle(tmp_path, "import sys, os\nprint(len(sys.argv) - 1 + os.path.exists(sys.argv[1]))\n")
        assert run_oracle(o, *paths) == 3

    def test_nonzero_exit(self, tmp_path, paths):
        o = self._oracle(tmp_path, "import sys\nprint('boom', file=sys.stderr)\nsys.exit(1)\n")
        with pytest.raises(OracleError, match="status 1") as info:
            run_oracle(o, *paths)
        assert "boom" in info.value.output

    def test_non_numeric(self, tmp_path, paths):
        o = self._oracle(tmp_path, "print('score: high')\n")
        with pytest.raises(OracleError, match="not a single number"):
            run_oracle(o, *paths)

    def test_non_finite(self, tmp_path, paths):
        o = self._oracle(tmp_path, "print('nan')\n")
        with pytest.raises(OracleError, match="non-finite"):
            run_oracle(o, *paths)

    def test_timeout(self, tmp_path, paths):
        o = self._oracle(tmp_path, "import time\ntime.sleep(5)\n", timeout=0.5)
        with pytest.raises(OracleError, match="timed out"):
            run_oracle(o, *paths)

    def test_missing_command(self, noisy32):
        o = OracleSpec("external-command", "/nonexistent/oracle-binary")
        with pytest.raises(OracleError, match="not resolvable"):
            lower_corner_sweep(noisy32, CFG53, [1], o)
