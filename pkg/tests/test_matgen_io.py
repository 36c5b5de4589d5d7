import csv
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rbki.gaps import gap_stats
from rbki.matgen import SpectrumSpec, haar_orthonormal, parse_spectrum, synth_matrix
from rbki.matrix_io import MM_HEADER, MatrixFormatError, read_matrix, write_matrix
from rbki.records import (
    COLUMNS,
    TIMING_COLUMNS,
    TrialRecord,
    emit_records,
    emit_timings,
    format_float,
    read_records,
    strip_timings,
)

# ---------------------------------------------------------------- generator


def test_explicit_list_spectrum():
    A, ref = synth_matrix(parse_spectrum("list:3,2,1", 3, 3))
    np.testing.assert_array_equal(ref.s, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(np.linalg.svd(A, compute_uv=False), [3, 2, 1], rtol=1e-13)


def test_geometric_gaps():
    spec = parse_spectrum("geometric:0.9", 50, 50)
    g = gap_stats(spec.singular_values(), 20)
    assert g.min_relative_gap == pytest.approx(0.19, rel=1e-12)
    diffs = 1 - (spec.singular_values()[1:20] / spec.singular_values()[:19]) ** 2
    np.testing.assert_allclose(diffs, 0.19, rtol=1e-12)


@pytest.mark.parametrize("text", ["geometric:0.8", "polynomial:1.5", "clustered:5,10:0.1:0.97", "list:4,3,3,1"])
def test_frobenius_identity(text):
    A, ref = synth_matrix(parse_spectrum(text, 30, 20, seed=3))
    assert np.sum(A**2) == pytest.approx(np.sum(ref.s**2), rel=1e-10)
    np.testing.assert_allclose(ref.U.T @ ref.U, np.eye(ref.s.size), atol=1e-12)
    assert np.max(np.abs(ref.reconstruct() - A)) <= 1e-13


def test_generator_deterministic_and_validated():
    a, _ = synth_matrix(SpectrumSpec("geometric", 10, 8, seed=4))
    b, _ = synth_matrix(SpectrumSpec("geometric", 10, 8, seed=4))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        parse_spectrum("list:1,2", 3, 3).singular_values()
    with pytest.raises(ValueError):
        parse_spectrum("list:3,2,1,0.5", 3, 3).singular_values()
    with pytest.raises(ValueError):
        parse_spectrum("bogus:1", 3, 3)
    with pytest.raises(ValueError):
        parse_spectrum("geometric", 3, 3)


def test_clustered_and_normalized():
    s = parse_spectrum("clustered:3:0.5:1.0", 6, 6, normalize=True).singular_values()
    np.testing.assert_allclose(s, [1, 1, 1, 0.5, 0.5, 0.5])
    s = parse_spectrum("list:4,2", 3, 3, normalize=True).singular_values()
    np.testing.assert_allclose(s, [1, 0.5, 0])


def test_haar_orthonormal():
    Q = haar_orthonormal(np.random.default_rng(0), 9, 4)
    np.testing.assert_allclose(Q.T @ Q, np.eye(4), atol=1e-13)


# ---------------------------------------------------------------- matrix files


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_raw_roundtrip_bitwise(tmp_path_factory, A):
    p = tmp_path_factory.mktemp("io") / "m.bin"
    write_matrix(p, A)
    B = read_matrix(p)
    assert B.tobytes() == np.ascontiguousarray(A).tobytes()
    write_matrix(p.with_suffix(".mtx"), A)
    C = read_matrix(p.with_suffix(".mtx"))
    assert C.tobytes() == np.ascontiguousarray(A).tobytes()


def test_raw_payload_identical_after_rewrite(tmp_path):
    A = np.random.default_rng(0).standard_normal((5, 3))
    write_matrix(tmp_path / "a.bin", A)
    write_matrix(tmp_path / "b.bin", read_matrix(tmp_path / "a.bin"))
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_matrix_market_public_header(tmp_path):
    p = tmp_path / "m.mtx"
    p.write_text(
        "%%MatrixMarket matrix array real general\n% a comment\n2 3\n1\n4\n2\n5\n3\n6.5e0\n"
    )
    np.testing.assert_array_equal(read_matrix(p), [[1, 2, 3], [4, 5, 6.5]])
    write_matrix(p, np.eye(2))
    assert p.read_text().splitlines()[0] == MM_HEADER


def test_truncated_raw_file_reports_sizes(tmp_path):
    p = tmp_path / "m.bin"
    write_matrix(p, np.ones((4, 4)))
    data = p.read_bytes()
    p.write_bytes(data[:-8])
    with pytest.raises(MatrixFormatError, match=f"expected {len(data)} bytes, found {len(data) - 8}"):
        read_matrix(p)


@pytest.mark.parametrize(
    "payload, message",
    [
        (b"RBK", "truncated header"),
        (struct.pack("<4sIQQ", b"XXXX", 1, 1, 1) + b"\0" * 8, "bad magic"),
        (struct.pack("<4sIQQ", b"RBKI", 9, 1, 1) + b"\0" * 8, "unsupported version"),
        (struct.pack("<4sIQQ", b"RBKI", 1, 0, 1), "empty dimensions"),
        (struct.pack("<4sIQQ", b"RBKI", 1, 1 << 32, 1 << 32), "overflow"),
        (struct.pack("<4sIQQ", b"RBKI", 1, 1, 1) + struct.pack("<d", math.inf), "non-finite"),
    ],
)
def test_raw_corruptions(tmp_path, payload, message):
    p = tmp_path / "m.bin"
    p.write_bytes(payload)
    with pytest.raises(MatrixFormatError, match=message):
        read_matrix(p)


@pytest.mark.parametrize(
    "text, message, line",
    [
        ("hello\n", "header", 1),
        ("%%MatrixMarket matrix coordinate real general\n1 1 1\n", "unsupported variant", 1),
        ("%%MatrixMarket matrix array real general\nx y\n", "bad size line", 2),
        ("%%MatrixMarket matrix array real general\n1 2\n1\nabc\n", "not a number", 4),
        ("%%MatrixMarket matrix array real general\n1 1\nnan\n", "non-finite", 3),
        ("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n", "expected 4 entries, found 3", None),
    ],
)
def test_matrix_market_errors(tmp_path, text, message, line):
    p = tmp_path / "m.mtx"
    p.write_text(text)
    with pytest.raises(MatrixFormatError, match=message) as info:
        read_matrix(p)
    if line is not None:
        assert info.value.line == line


def test_write_rejects_non_finite(tmp_path):
    with pytest.raises(ValueError):
        write_matrix(tmp_path / "m.bin", np.array([[np.nan]]))


# ---------------------------------------------------------------- records


def _rec(i, **kw):
    base = dict(experiment="e", seed=i % 3, trial=i, k=4, b=2, q=3, frobenius_ratio=1 + i * 1e-3, wall_time=0.1 * i, passed=i % 2 == 0)
    base.update(kw)
    return TrialRecord(**base)


def test_empty_records_header_only(tmp_path):
    p = tmp_path / "r.csv"
    emit_records([], p)
    assert p.read_bytes() == (",".join(COLUMNS) + "\r\n").encode()


def test_records_roundtrip_and_sorted(tmp_path):
    recs = [_rec(i) for i in (5, 1, 3)]
    recs[0].note = 'a, "quoted" note'
    p = tmp_path / "r.csv"
    emit_records(recs, p)
    back = read_records(p)
    assert [(r.seed, r.trial) for r in back] == sorted((r.seed, r.trial) for r in recs)
    by_trial = {r.trial: r for r in back}
    assert by_trial[5].note == 'a, "quoted" note'
    assert by_trial[3].frobenius_ratio == recs[2].frobenius_ratio
    assert by_trial[1].passed is False and by_trial[5].passed is False


def test_strict_runs_identical(tmp_path):
    recs = [_rec(i) for i in range(20)]
    emit_records(strip_timings(recs), tmp_path / "a.csv")
    later = [_rec(i, wall_time=99.0) for i in range(20)]
    emit_records(strip_timings(later), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_many_records_parse_with_csv_module(tmp_path):
    p = tmp_path / "r.csv"
    emit_records((_rec(i) for i in range(10_000)), p)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 10_001
    assert {len(r) for r in rows} == {len(COLUMNS)}


def test_timings_sidecar(tmp_path):
    p = tmp_path / "t.csv"
    emit_timings([_rec(2)], p)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TIMING_COLUMNS
    assert float(rows[1][TIMING_COLUMNS.index("wall_time")]) == pytest.approx(0.2)


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(format_float(x)) == x
    assert format_float(math.nan) == "nan"
