from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlrl.data import (
    CONSTANT_TARGET,
    HEADER,
    Dataset,
    generate,
    load_csv,
    save_csv,
    split_sizes,
    target_matrix,
    target_vector,
    validate_targets,
)
from nlrl.errors import DomainError
from nlrl.prng import SplitMix64, derive_seed

GOLDEN = Path(__file__).parent / "data" / "golden_seed7_n16.csv"
M64 = (1 << 64) - 1


def splitmix_ints(seed, count):
    """Reference SplitMix64 on Python integers."""
    state, out = seed & M64, []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & M64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        out.append(z ^ (z >> 31))
    return out


def reference_csv(seed, n):
    u = [(v >> 11) * 2.0 ** -53 for v in splitmix_ints(seed, 2 * n)]
    lines = [",".join(HEADER)]
    n_test = int(n * 0.1 + 0.5)
    for i in range(n):
        x, y = u[2 * i], u[2 * i + 1]
        a, b = x * (1 - y), (1 - x) * y
        t = [x / 2 + y / 2, x * (1 - y), x * y, x + y - x * y, a + b - a * b, x, y, 1 - x, 1 - y, 0.7]
        split = "train" if i < n - n_test else "test"
        lines.append(",".join("%.17g" % v for v in [x, y] + t) + "," + split)
    return "\n".join(lines) + "\n"


class TestPrng:
    def test_reference_vector(self):
        r = SplitMix64(1234567)
        assert [r.next_u64() for _ in range(5)] == [
            6457827717110365317, 3203168211198807973, 9817491932198370423,
            4593380528125082431, 16408922859458223821]

    @given(st.integers(0, 2**64 - 1))
    def test_vectorised_matches_integer_reference(self, seed):
        assert SplitMix64(seed).u64(7).tolist() == splitmix_ints(seed, 7)

    def test_stream_continues_across_calls(self):
        a = SplitMix64(9)
        b = SplitMix64(9)
        first = a.u64(3).tolist() + a.u64(2).tolist()
        assert first == b.u64(5).tolist()

    def test_uniform_range(self):
        u = SplitMix64(3).uniform(10_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.02

    def test_permutation(self):
        p = SplitMix64(4).permutation(50)
        assert sorted(p.tolist()) == list(range(50))
        assert p.tolist() == SplitMix64(4).permutation(50).tolist()

    def test_derive_seed_separates_streams(self):
        seeds = {derive_seed(0, k) for k in range(100)} | {derive_seed(1, k) for k in range(100)}
        assert len(seeds) == 200


class TestTargets:
    def test_spot_values(self):
        assert target_vector(1, 0).tolist() == [0.5, 1, 0, 1, 1, 1, 0, 0, 1, 0.7]
        assert target_vector(1, 1).tolist() == [1, 0, 1, 1, 0, 1, 1, 0, 0, 0.7]
        assert target_vector(0.5, 0.5).tolist() == [0.5, 0.25, 0.25, 0.75, 0.4375, 0.5, 0.5, 0.5, 0.5, 0.7]

    def test_domain(self):
        with pytest.raises(DomainError):
            target_vector(1.2, 0.0)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_bounds_and_identities(self, x, y):
        t = target_vector(x, y)
        assert ((t >= 0) & (t <= 1)).all()
        assert t[9] == CONSTANT_TARGET
        assert t[5] + t[7] == pytest.approx(1.0)
        # XOR never exceeds OR
        assert t[4] <= t[3] + 1e-15


class TestGenerate:
    def test_split_sizes(self):
        assert split_sizes(100_000) == (90_000, 10_000)
        d = generate(7, 100_000)
        assert (d.n_train, d.n_test) == (90_000, 10_000)

    def test_deterministic(self, tmp_path):
        save_csv(generate(7, 100), tmp_path / "a.csv")
        save_csv(generate(7, 100), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_seeds_differ(self):
        assert generate(1, 10) != generate(2, 10)

    def test_golden_file(self, tmp_path):
        save_csv(generate(7, 16), tmp_path / "g.csv")
        assert (tmp_path / "g.csv").read_bytes() == GOLDEN.read_bytes()

    def test_golden_matches_reference(self):
        assert GOLDEN.read_text() == reference_csv(7, 16)

    def test_too_small(self):
        with pytest.raises(ValueError):
            generate(0, 1)


class TestCsv:
    def test_round_trip(self, tmp_path):
        d = generate(7, 1000)
        save_csv(d, tmp_path / "d.csv")
        back = load_csv(tmp_path / "d.csv")
        assert back == d
        assert np.array_equal(back.inputs, d.inputs)
        assert len((tmp_path / "d.csv").read_text().splitlines()) == 1001

    def test_wrong_targets_load_but_fail_validation(self, tmp_path):
        p = tmp_path / "w.csv"
        good = ",".join(str(v) for v in [0.5, 0.5] + target_vector(0.5, 0.5).tolist())
        bad = ",".join(str(v) for v in [1, 0] + [0.0] * 10)
        p.write_text(",".join(HEADER) + "\n" + good + ",train\n" + bad + ",test\n")
        d = load_csv(p)
        assert validate_targets(d) == [1]

    @pytest.mark.parametrize("row,lineno", [
        ("0.1,0.2,0,0,0,0,0,0,0,0,0,0", 3),
        ("0.1,abc,0,0,0,0,0,0,0,0,0,0,train", 3),
        ("0.1,0.2,0,0,0,0,0,0,0,0,0,0,valid", 3),
    ])
    def test_malformed_line_reports_number(self, tmp_path, row, lineno):
        p = tmp_path / "m.csv"
        ok = ",".join(["0.5"] * 12) + ",train"
        p.write_text(",".join(HEADER) + "\n" + ok + "\n" + row + "\n")
        with pytest.raises(ValueError, match=f":{lineno}:"):
            load_csv(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("a,b\n")
        with pytest.raises(ValueError, match=":1:"):
            load_csv(p)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros((2, 10)), 1)
        d = Dataset(np.zeros((3, 2)), target_matrix(np.zeros(3), np.zeros(3)), 2)
        assert d.sample(0).targets.tolist() == target_vector(0, 0).tolist()
