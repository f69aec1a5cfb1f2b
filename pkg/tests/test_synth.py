import json

import numpy as np
import pytest

from tlsclassify.features import INDEX, build_dataset
from tlsclassify.flows import group_by_key, join_records, label_aggregates, load_manifest
from tlsclassify.synth import SynthSpec, generate, write_capture
from tlsclassify.zeek import read_log


def _data_lines(path):
    with open(path) as fh:
        return [ln for ln in fh if not ln.startswith("#")]


def test_one_malicious_single_flow(tmp_path):
    spec = SynthSpec(n_benign=0, n_malicious=1, flows_min=1, flows_max=1)
    manifest = write_capture(spec, tmp_path)
    for kind in ("conn", "ssl", "x509"):
        assert len(_data_lines(tmp_path / f"{kind}.log")) == 1, kind
    (cap,) = load_manifest(manifest)
    assert len(cap.labels.infected_ips) == 1
    meta = json.loads((tmp_path / "synth_meta.json").read_text())
    assert meta["spec"]["n_malicious"] == 1 and "planted_signals" in meta


def test_fixed_seed_is_byte_identical(tmp_path):
    spec = SynthSpec(n_benign=30, n_malicious=30, seed=4)
    write_capture(spec, tmp_path / "a")
    write_capture(spec, tmp_path / "b")
    for name in ("conn.log", "ssl.log", "x509.log", "manifest.json", "synth_meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    write_capture(SynthSpec(n_benign=30, n_malicious=30, seed=5), tmp_path / "c")
    assert (tmp_path / "a" / "conn.log").read_bytes() != (tmp_path / "c" / "conn.log").read_bytes()


def test_logs_roundtrip_through_parser(tmp_path):
    spec = SynthSpec(n_benign=40, n_malicious=40, seed=1)
    conns, ssls, certs, _ = generate(spec)
    write_capture(spec, tmp_path)
    for kind, recs in (("conn", conns), ("ssl", ssls), ("x509", certs)):
        parsed, info = read_log(tmp_path / f"{kind}.log", kind)
        assert info.skipped == 0
        assert parsed == recs


def test_counts_and_labels():
    spec = SynthSpec(n_benign=50, n_malicious=70, seed=2)
    conns, ssls, certs, labels = generate(spec)
    aggs, dropped = group_by_key(join_records(conns, ssls, certs))
    aggs = label_aggregates(aggs, labels)
    assert dropped == 0
    assert sum(a.label == "malicious" for a in aggs) == 70
    assert sum(a.label == "benign" for a in aggs) == 50
    assert all(a.family in spec.families for a in aggs if a.label == "malicious")
    assert all(spec.flows_min <= len(a.flows) <= spec.flows_max for a in aggs)


def test_planted_key_length_signal():
    conns, ssls, certs, labels = generate(SynthSpec(n_benign=300, n_malicious=300, seed=3))
    aggs = label_aggregates(group_by_key(join_records(conns, ssls, certs))[0], labels)
    ds = build_dataset(aggs)
    key = ds.X[:, INDEX["avg_key_len"]]
    assert key[ds.y == 1].mean() < key[ds.y == 0].mean()
    selfsigned = ds.X[:, INDEX["self_signed_ratio"]]
    assert selfsigned[ds.y == 1].mean() > selfsigned[ds.y == 0].mean()


def test_periodicity_is_not_linearly_informative():
    conns, ssls, certs, labels = generate(SynthSpec(n_benign=500, n_malicious=500, seed=6))
    aggs = label_aggregates(group_by_key(join_records(conns, ssls, certs))[0], labels)
    ds = build_dataset(aggs)
    period = ds.X[:, INDEX["periodicity_average"]]
    assert abs(period[ds.y == 1].mean() - period[ds.y == 0].mean()) < 2.0
    inside = (period >= 50) & (period <= 70)
    assert (inside == (ds.y == 1)).mean() > 0.95


@pytest.mark.parametrize("bad", [dict(n_benign=-1), dict(flows_min=0), dict(flows_min=5, flows_max=4),
                                 dict(jitter_max=20.0)])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        SynthSpec(**bad)
