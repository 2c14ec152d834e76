import dataclasses
import json
import math

import numpy as np
import pytest

from fairpost.analysis import FairnessReport
from fairpost.fl import TrainingTrace
from fairpost.report import (
    GridEntry,
    analytic_table,
    format_table,
    grid_tsv_lines,
    save_comparison_figure,
    save_relaxation_figure,
    save_training_figure,
    summary_table,
    trace_table,
    trace_tsv_lines,
)


def _report(avg=0.8, eod=0.1, ad=0.05, dev=0.02, k=2):
    return FairnessReport(
        avg_acc=avg,
        eod=eod,
        per_community_acc=np.linspace(avg - ad / 2, avg + ad / 2, k),
        accuracy_disparity=ad,
        per_community_eod=np.full(k, eod),
        tpr_a0=0.7,
        tpr_a1=0.7 - eod,
        max_error_deviation=dev,
    )


def _entry(eps=0.0, delta=0.0, with_empirical=True):
    return GridEntry(
        eps=eps,
        delta=delta,
        objective=0.21,
        estimated_loss=0.04,
        empirical_loss=0.05 if with_empirical else None,
        analytic=_report(avg=0.76, eod=0.0, ad=0.0, dev=0.0),
        empirical=_report(avg=0.75, eod=0.01, ad=0.02, dev=0.01) if with_empirical else None,
    )


def _trace(rounds=3, k=2):
    losses = np.arange(rounds * k, dtype=float).reshape(rounds, k) / 10 + 0.3
    losses[1, 0] = np.nan  # skipped client
    return TrainingTrace(
        communities=list(range(1, k + 1)),
        client_losses=losses,
        val_loss=np.linspace(0.9, 0.5, rounds),
        val_acc=np.linspace(0.6, 0.8, rounds),
        best_round=rounds,
    )


def test_format_table_pads_columns():
    out = format_table(["ab", "c"], [["1", "2222"], ["333", "4"]])
    lines = out.split("\n")
    assert lines[0] == "ab   c"
    assert lines[1] == "---  ----"
    assert lines[2] == "1    2222"
    assert lines[3] == "333  4"
    # no trailing whitespace anywhere
    assert all(line == line.rstrip() for line in lines)


def test_summary_table_contains_baseline_and_post_rows():
    out = summary_table(_report(), [_entry(), _entry(0.02, 0.04)])
    lines = out.split("\n")
    assert len(lines) == 2 + 3  # header + rule + baseline + two entries
    assert lines[2].startswith("baseline")
    assert "0.020" in lines[4] and "0.040" in lines[4]
    # empirical view shown when present
    assert "0.7500" in lines[3]


def test_summary_table_falls_back_to_analytic():
    out = summary_table(_report(), [_entry(with_empirical=False)])
    assert "0.7600" in out.split("\n")[3]
    assert out.split("\n")[3].rstrip().endswith("-")  # missing empirical loss


def test_analytic_table_shape():
    out = analytic_table([_entry(), _entry(0.02, 0.0)])
    lines = out.split("\n")
    assert len(lines) == 4
    assert lines[0].split()[:2] == ["eps", "delta"]
    assert "0.210000" in lines[2]


def test_trace_table_marks_missing_losses():
    out = trace_table(_trace())
    lines = out.split("\n")
    assert len(lines) == 2 + 3
    assert lines[0].split() == ["round", "client1_loss", "client2_loss", "val_loss", "val_acc"]
    assert lines[3].split()[1] == "-"  # the NaN cell


def test_trace_tsv_round_count_and_blanks():
    lines = trace_tsv_lines(_trace(rounds=4), comment="run abc")
    assert lines[0] == "# run abc"
    assert len(lines) == 2 + 4
    cells = lines[3].split("\t")
    assert cells[0] == "2"
    assert cells[1] == ""  # NaN renders as empty cell
    assert float(cells[3]) == pytest.approx(0.9 - 0.4 / 3)


def test_grid_tsv_lines():
    lines = grid_tsv_lines([_entry(), _entry(0.02, 0.04, with_empirical=False)])
    assert len(lines) == 3
    header = lines[0].split("\t")
    assert header[0] == "eps" and header[-1] == "max_error_deviation"
    first = dict(zip(header, lines[1].split("\t")))
    assert float(first["empirical_loss"]) == 0.05
    second = dict(zip(header, lines[2].split("\t")))
    assert second["empirical_loss"] == ""
    assert float(second["avg_acc"]) == 0.76  # analytic fallback


def test_grid_entry_json_round_trip():
    entry = _entry(0.02, 0.04)
    back = GridEntry.from_json_dict(json.loads(json.dumps(entry.to_json_dict())))
    assert back.eps == entry.eps and back.delta == entry.delta
    assert back.objective == entry.objective
    assert back.empirical_loss == entry.empirical_loss
    assert np.array_equal(back.analytic.per_community_acc, entry.analytic.per_community_acc)
    assert back.empirical.avg_acc == entry.empirical.avg_acc


def test_grid_entry_json_handles_missing_empirical():
    entry = _entry(with_empirical=False)
    back = GridEntry.from_json_dict(json.loads(json.dumps(entry.to_json_dict())))
    assert back.empirical is None and back.empirical_loss is None


def test_nan_rate_gap_survives_serialization():
    rep = dataclasses.replace(_report(), per_community_eod=np.array([0.1, math.nan]))
    back = FairnessReport.from_json_dict(json.loads(json.dumps(rep.to_json_dict())))
    assert back.per_community_eod[0] == 0.1
    assert math.isnan(back.per_community_eod[1])


def test_figures_render_to_files(tmp_path):
    trace = _trace(rounds=5, k=3)
    entries = [_entry(e, d) for e in (0.0, 0.02) for d in (0.0, 0.02)]
    paths = [tmp_path / name for name in
             ("train.png", "relax.png", "compare.png")]
    save_training_figure(trace, paths[0])
    save_relaxation_figure(entries, paths[1])
    save_comparison_figure(_report(), entries, paths[2])
    for p in paths:
        data = p.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 2000
