import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import DAY, aggregate, cert, flow, random_aggregate
from tlsclassify.flows import JoinedFlow, MALICIOUS
from tlsclassify.features import (
    BOOLEAN_FEATURES,
    FEATURE_NAMES,
    INDEX,
    N_FEATURES,
    RATIO_FEATURES,
    EmptyTrainingSet,
    LabeledDataset,
    apply_scaler,
    build_dataset,
    compute_periodicity,
    extract_features,
    fit_scaler,
    hostname_matches,
    read_csv,
    write_csv,
    write_jsonl,
)
from tlsclassify.zeek import ConnRecord, SslRecord, X509Record


def named(vec):
    return dict(zip(FEATURE_NAMES, vec.tolist()))


def test_names_and_counts():
    assert N_FEATURES == 38 == len(set(FEATURE_NAMES))
    assert FEATURE_NAMES[0] == "no_of_flows" and FEATURE_NAMES[-1] == "ratio_certificate_path_error"
    assert FEATURE_NAMES[10:12] == ("periodicity_average", "periodicity_standard_deviation")
    assert RATIO_FEATURES <= set(FEATURE_NAMES) and BOOLEAN_FEATURES <= set(FEATURE_NAMES)


def test_single_flow_degenerate_case():
    agg = aggregate([flow("C1", duration=2.0, orig_bytes=100, resp_bytes=300)])
    f = named(extract_features(agg))
    assert f["no_of_flows"] == 1
    assert f["avg_of_duration"] == 2.0
    assert f["standard_deviation_duration"] == 0
    assert f["ratio_of_sizes"] == 0.75
    assert f["ssl_ratio"] == 1.0
    assert f["periodicity_average"] == 0 and f["periodicity_standard_deviation"] == 0


def test_equal_gaps_periodicity_in_aggregate():
    agg = aggregate([flow(f"C{i}", ts=float(t)) for i, t in enumerate([0, 10, 20, 30])])
    f = named(extract_features(agg))
    assert f["periodicity_average"] == 10 and f["periodicity_standard_deviation"] == 0


@pytest.mark.parametrize("times,expected", [
    ([5.0], (0.0, 0.0)),
    ([], (0.0, 0.0)),
    ([0, 10, 20, 30], (10.0, 0.0)),
    ([0, 5, 15], (7.5, 2.5)),
])
def test_compute_periodicity(times, expected):
    assert compute_periodicity(times) == pytest.approx(expected, abs=1e-12)


def test_four_flow_self_signed_fixture():
    ca = cert("F1", cn="shop.example", issuer="CN=Example CA", san=("shop.example",))
    own = cert("F2", cn="own.example", issuer=None, subject="CN=own.example",
               san=("own.example",))
    own = X509Record(own.cert_id, own.ts, own.not_before, own.not_after, own.subject,
                     "CN=own.example", own.key_type, own.key_length, own.exponent, own.san_dns)
    agg = aggregate([
        flow("C1", 0.0, certificate=ca),
        flow("C2", 1.0, certificate=own),
        flow("C3", 2.0, with_ssl=False),
        flow("C4", 3.0, with_ssl=False),
    ])
    f = named(extract_features(agg))
    assert f["ssl_ratio"] == 0.5
    assert f["self_signed_ratio"] == 0.5
    assert f["amount_diff_certificates"] == 2


def _mixed_aggregate():
    f1 = cert("F1", cn="www.example.com", issuer="CN=Example CA",
              san=("*.example.com", "example.com"), key_length=2048, exponent=65537,
              not_before=0.0, not_after=365 * DAY, subject="CN=www.example.com")
    f2 = cert("F2", cn="evil", issuer="CN=evil", san=(), key_length=1024, exponent=3,
              not_before=0.0, not_after=30 * DAY, subject="CN=evil")
    a = flow("C1", 100.0, duration=2.0, orig_bytes=100, resp_bytes=300, state="SF",
             orig_pkts=5, resp_pkts=7)
    a = JoinedFlow(a.conn, SslRecord(100.0, "C1", "TLSv12", "c", "www.example.com",
                                     "CN=www.example.com", "CN=Example CA", ("F1", "F9"), "ok"), f1)
    b = flow("C2", 110.0, duration=4.0, orig_bytes=50, resp_bytes=50, state="S0",
             orig_pkts=1, resp_pkts=0)
    b = JoinedFlow(b.conn, SslRecord(110.0, "C2", "SSLv3", "c", None, "CN=evil", "CN=evil",
                                     ("F2",), "self signed certificate"), f2)
    c = JoinedFlow(ConnRecord(130.0, "C3", "10.0.0.1", "93.184.216.34", 443, "tcp",
                              None, None, None, None, "REJ", None, None))
    d = flow("C4", 160.0, with_ssl=False, duration=6.0, orig_bytes=0, resp_bytes=0,
             state="RSTO", orig_pkts=2, resp_pkts=2)
    return aggregate([a, b, c, d])


# Recounted by hand from the four flows above.
MIXED_EXPECTED = {
    "no_of_flows": 4,
    "avg_of_duration": 4.0,
    "standard_deviation_duration": math.sqrt(8 / 3),
    "percent_sd_of_duration": 2 / 3,
    "size_of_orig_flows": 150,
    "size_of_resp_flows": 350,
    "ratio_of_sizes": 0.7,
    "percent_of_established_states": 0.5,
    "inbound_pckts": 9,
    "outbound_pckts": 8,
    "periodicity_average": 20.0,
    "periodicity_standard_deviation": math.sqrt(200 / 3),
    "ssl_ratio": 0.5,
    "avg_key_len": 1536,
    "tls_version_ratio": 0.5,
    "avg_of_certificate_len": 197.5,
    "standard_deviation_cert_len": 167.5,
    "is_valid_certificate": 1,
    "amount_diff_certificates": 2,
    "no_of_domains_in_cert": 1.0,
    "no_of_cert_path": 1.5,
    "x509_ssl_ratio": 1.0,
    "SNI_ssl_ratio": 0.5,
    "self_signed_ratio": 0.5,
    "is_SNIs_in_SAN_dns": 1,
    "is_CNs_in_SAN_dns": 0,
    "differ_SNI_in_ssl_log": 1.0,
    "differ_subject_in_ssl_log": 1.0,
    "differ_issuer_in_ssl_log": 1.0,
    "differ_subject_in_cert": 1.0,
    "differ_issuer_in_cert": 1.0,
    "differ_sandns_in_cert": 1.0,
    "ratio_of_same_subjects": 0.5,
    "ratio_of_same_issuer": 0.5,
    "is_same_CN_and_SNI": 1,
    "average_certificate_expo": 32770,
    "is_SNI_top_level_domain": 1,
    "ratio_certificate_path_error": 0.5,
}


def test_mixed_fixture_all_features():
    got = named(extract_features(_mixed_aggregate()))
    assert set(MIXED_EXPECTED) == set(FEATURE_NAMES)
    for name, want in MIXED_EXPECTED.items():
        assert got[name] == pytest.approx(want, rel=1e-12), name


def test_expired_certificate_and_repeat_subjects():
    old = cert("F1", not_before=0.0, not_after=10.0)
    agg = aggregate([flow("C1", 5.0, certificate=old), flow("C2", 50.0, certificate=old),
                     flow("C3", 60.0, certificate=old)])
    f = named(extract_features(agg))
    assert f["is_valid_certificate"] == 0
    assert f["amount_diff_certificates"] == 1
    assert f["differ_subject_in_cert"] == pytest.approx(1 / 3)
    assert f["avg_of_certificate_len"] == pytest.approx(10 / DAY)


def test_vacuous_booleans_are_zero_without_certificates():
    f = named(extract_features(aggregate([flow("C1")])))
    for name in ("is_valid_certificate", "is_SNIs_in_SAN_dns", "is_CNs_in_SAN_dns",
                 "is_same_CN_and_SNI"):
        assert f[name] == 0
    assert f["avg_key_len"] == 0 and f["average_certificate_expo"] == 0


@pytest.mark.parametrize("pattern,host,ok", [
    ("*.example.com", "a.example.com", True),
    ("*.example.com", "a.b.example.com", False),
    ("*.example.com", "example.com", False),
    ("Example.COM.", "example.com", True),
    ("example.com", "example.org", False),
    ("", "", False),
])
def test_hostname_matches(pattern, host, ok):
    assert hostname_matches(pattern, host) is ok


@pytest.mark.parametrize("sni,ok", [("a.example.com", 1), ("10.0.0.1", 0), ("host.c0m", 0),
                                    ("localhost", 1), ("a.b.x", 0)])
def test_sni_tld(sni, ok):
    f = named(extract_features(aggregate([flow("C1", sni=sni)])))
    assert f["is_SNI_top_level_domain"] == ok


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_feature_ranges(seed):
    vec = extract_features(random_aggregate(np.random.default_rng(seed)))
    assert vec.shape == (38,)
    assert np.isfinite(vec).all()
    f = named(vec)
    for name in RATIO_FEATURES:
        assert 0.0 <= f[name] <= 1.0, name
    for name in BOOLEAN_FEATURES:
        assert f[name] in (0.0, 1.0), name
    assert (vec >= 0).all()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_adding_identical_ssl_flow_is_monotone(seed):
    agg = random_aggregate(np.random.default_rng(seed))
    base = agg.ssl_flows[-1]
    later = max(f.conn.ts for f in agg.flows) + 1.0
    c = base.conn
    conn2 = ConnRecord(later, "Zextra", c.orig_ip, c.resp_ip, c.resp_port, c.proto, c.service,
                       c.duration, c.orig_bytes, c.resp_bytes, c.conn_state, c.orig_pkts,
                       c.resp_pkts)
    s = base.ssl
    ssl2 = SslRecord(later, "Zextra", s.version, s.cipher, s.server_name, s.subject, s.issuer,
                     s.cert_chain_ids, s.validation_status)
    bigger = aggregate(agg.flows + [JoinedFlow(conn2, ssl2, base.cert)])
    before, after = extract_features(agg), extract_features(bigger)
    for name in ("no_of_flows", "size_of_orig_flows", "size_of_resp_flows",
                 "inbound_pckts", "outbound_pckts"):
        assert after[INDEX[name]] >= before[INDEX[name]], name


def test_dataset_csv_and_jsonl(tmp_path):
    agg = _mixed_aggregate()
    agg.label, agg.family, agg.capture = MALICIOUS, "Zbot", "cap1"
    other = aggregate([flow("C9", src="10.9.9.9")], label="benign")
    ds = build_dataset([agg, other])
    assert ds.y.tolist() == [1, 0]
    assert ds.keys[0] == "cap1/10.0.0.1|93.184.216.34|443|tcp"
    write_csv(ds, tmp_path / "f.csv")
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert header == [*FEATURE_NAMES, "label", "family", "key"]
    back = read_csv(tmp_path / "f.csv")
    assert np.array_equal(back.X, ds.X)
    assert back.families == ["Zbot", None] and back.keys == ds.keys
    write_jsonl(ds, tmp_path / "f.jsonl")
    assert len((tmp_path / "f.jsonl").read_text().splitlines()) == 2


def test_dataset_subset_and_select():
    ds = LabeledDataset(np.arange(76.0).reshape(2, 38), [0, 1], [None, "x"], ["a", "b"])
    sub = ds.subset([1]).select_features([0, 10])
    assert sub.X.tolist() == [[38.0, 48.0]]
    assert sub.feature_names == ("no_of_flows", "periodicity_average")


# ---------------------------------------------------------------------------
# scaling


def test_scaler_two_values():
    p = fit_scaler([[2.0], [4.0]])
    assert p.mean.tolist() == [3.0] and p.std.tolist() == [1.0]
    assert apply_scaler(p, [[2.0], [4.0]]).ravel().tolist() == [-1.0, 1.0]


def test_scaler_constant_column():
    p = fit_scaler([[7.0], [7.0], [7.0]])
    assert p.constant.tolist() == [True]
    assert apply_scaler(p, [[7.0], [7.0], [7.0]]).ravel().tolist() == [0.0, 0.0, 0.0]


def test_scaler_random_column_moments():
    col = np.random.default_rng(3).normal(12.0, 5.0, size=(100, 1))
    z = apply_scaler(fit_scaler(col), col)
    assert abs(z.mean()) < 1e-9 and abs(z.std() - 1.0) < 1e-9


def test_scaler_empty():
    with pytest.raises(EmptyTrainingSet):
        fit_scaler(np.zeros((0, 3)))


def test_scaler_params_roundtrip():
    p = fit_scaler(np.random.default_rng(0).normal(size=(5, 3)))
    q = type(p).from_dict(p.to_dict())
    assert np.array_equal(p.mean, q.mean) and np.array_equal(p.std, q.std)
