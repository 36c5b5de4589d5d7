import math

from rbki.records import TrialRecord, emit_records, emit_timings
from rbki.report import SUMMARY_COLUMNS, render_bench, render_lab, trace_series


def _trace():
    recs = []
    for b in (1, 4):
        for seed in (0, 1):
            for q in range(1, 5):
                recs.append(
                    TrialRecord(f"trace/b={b:03d}", seed, q, k=4, b=b, q=q, matvec_count=2 * b * q, wall_time=0.01 * q, frobenius_ratio=1 + 2.0**-q)
                )
    return recs


def test_trace_series_first_seed():
    series = trace_series(_trace())
    assert list(series) == [1, 4]
    assert all(r.seed == 0 for v in series.values() for r in v)
    assert [r.q for r in series[4]] == [1, 2, 3, 4]


def test_render_bench(tmp_path):
    trace = _trace()
    emit_records(trace, tmp_path / "bench_trace.csv")
    emit_timings(trace, tmp_path / "bench_timings.csv")
    png, gp = render_bench(trace, tmp_path)
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    text = gp.read_text()
    assert "bench_trace.csv" in text and "bench_timings.csv" in text
    assert "trace/b=001" in text and "trace/b=004" in text


def test_render_bench_deterministic(tmp_path):
    a = render_bench(_trace(), tmp_path, "a")[0].read_bytes()
    b = render_bench(_trace(), tmp_path, "b")[0].read_bytes()
    assert a == b


def test_render_lab(tmp_path):
    rows = [dict(b=b, t=12 // b, q05=-3.0 * (12 // b), q50=-2.0 * (12 // b), q95=-1.0 * (12 // b), log_bound=-40.0 * (12 // b)) for b in (1, 2, 3)]
    png, gp = render_lab(rows, tmp_path)
    assert png.exists()
    text = gp.read_text()
    assert "lab_summary.csv" in text
    # column indices in the script match the summary header
    assert f"using {SUMMARY_COLUMNS.index('t') + 1}:" in text
    assert not math.isnan(rows[0]["q50"])
