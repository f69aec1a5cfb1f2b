"""The 38 connection-level features, dataset assembly and standardisation."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .flows import MALICIOUS, ConnectionAggregate, ConnKey

FEATURE_NAMES = (
    "no_of_flows",
    "avg_of_duration",
    "standard_deviation_duration",
    "percent_sd_of_duration",
    "size_of_orig_flows",
    "size_of_resp_flows",
    "ratio_of_sizes",
    "percent_of_established_states",
    "inbound_pckts",
    "outbound_pckts",
    "periodicity_average",
    "periodicity_standard_deviation",
    "ssl_ratio",
    "avg_key_len",
    "tls_version_ratio",
    "avg_of_certificate_len",
    "standard_deviation_cert_len",
    "is_valid_certificate",
    "amount_diff_certificates",
    "no_of_domains_in_cert",
    "no_of_cert_path",
    "x509_ssl_ratio",
    "SNI_ssl_ratio",
    "self_signed_ratio",
    "is_SNIs_in_SAN_dns",
    "is_CNs_in_SAN_dns",
    "differ_SNI_in_ssl_log",
    "differ_subject_in_ssl_log",
    "differ_issuer_in_ssl_log",
    "differ_subject_in_cert",
    "differ_issuer_in_cert",
    "differ_sandns_in_cert",
    "ratio_of_same_subjects",
    "ratio_of_same_issuer",
    "is_same_CN_and_SNI",
    "average_certificate_expo",
    "is_SNI_top_level_domain",
    "ratio_certificate_path_error",
)
N_FEATURES = len(FEATURE_NAMES)
INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

RATIO_FEATURES = frozenset({
    "percent_sd_of_duration", "ratio_of_sizes", "percent_of_established_states",
    "ssl_ratio", "tls_version_ratio", "x509_ssl_ratio", "SNI_ssl_ratio",
    "self_signed_ratio", "differ_SNI_in_ssl_log", "differ_subject_in_ssl_log",
    "differ_issuer_in_ssl_log", "differ_subject_in_cert", "differ_issuer_in_cert",
    "differ_sandns_in_cert", "ratio_of_same_subjects", "ratio_of_same_issuer",
    "ratio_certificate_path_error",
})
BOOLEAN_FEATURES = frozenset({
    "is_valid_certificate", "is_SNIs_in_SAN_dns", "is_CNs_in_SAN_dns",
    "is_same_CN_and_SNI", "is_SNI_top_level_domain",
})

ESTABLISHED_STATES = frozenset({"SF", "S1", "S2", "S3", "RSTO", "RSTR"})
SECONDS_PER_DAY = 86400.0

# stands in for an absent value when counting distinct values
_ABSENT = object()


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def _pstdev(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    mu = _mean(xs)
    return math.sqrt(math.fsum((x - mu) ** 2 for x in xs) / len(xs))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_periodicity(start_times: Sequence[float]) -> tuple:
    """Mean and population standard deviation of gaps between start times."""
    if len(start_times) < 2:
        return 0.0, 0.0
    gaps = [b - a for a, b in zip(start_times, start_times[1:])]
    return _mean(gaps), _pstdev(gaps)


def _norm_host(name: str) -> str:
    return name.strip().rstrip(".").lower()


def hostname_matches(pattern: str, host: str) -> bool:
    """Match ``host`` against a certificate name, allowing one leading ``*.`` label."""
    pattern, host = _norm_host(pattern), _norm_host(host)
    if not pattern or not host:
        return False
    if pattern.startswith("*."):
        suffix = pattern[1:]
        if not host.endswith(suffix):
            return False
        head = host[: -len(suffix)]
        return bool(head) and "." not in head
    return pattern == host


def _plausible_tld(sni: str) -> bool:
    label = _norm_host(sni).rsplit(".", 1)[-1]
    return len(label) >= 2 and label.isalpha()


def _distinct_ratio(values: list) -> float:
    return _ratio(len(set(values)), len(values))


def _modal_ratio(values: list) -> float:
    if not values:
        return 0.0
    return Counter(values).most_common(1)[0][1] / len(values)


def _or_absent(v):
    return _ABSENT if v is None else v


def extract_features(agg: ConnectionAggregate) -> np.ndarray:
    """Compute the 38-component feature vector of one aggregate."""
    flows = agg.flows
    conns = [f.conn for f in flows]
    ssls = [f.ssl for f in flows if f.ssl is not None]
    pairs = [(f, f.cert) for f in flows if f.cert is not None]
    certs = [c for _, c in pairs]

    n = len(conns)
    durations = [c.duration for c in conns if c.duration is not None]
    dur_mu, dur_sd = _mean(durations), _pstdev(durations)
    exceeding = sum(1 for d in durations if abs(d - dur_mu) > dur_sd)
    orig_bytes = sum(c.orig_bytes or 0 for c in conns)
    resp_bytes = sum(c.resp_bytes or 0 for c in conns)
    established = sum(1 for c in conns if c.conn_state in ESTABLISHED_STATES)
    period_mu, period_sd = compute_periodicity(sorted(c.ts for c in conns))

    n_ssl = len(ssls)
    key_lens = [c.key_length for c in certs if c.key_length is not None]
    tls = sum(1 for s in ssls if s.version and s.version.upper().startswith("TLS"))
    validity = [
        (c.not_after - c.not_before) / SECONDS_PER_DAY
        for c in certs
        if c.not_before is not None and c.not_after is not None
    ]
    valid = bool(pairs) and all(
        c.not_before is not None and c.not_after is not None
        and c.not_before <= f.conn.ts <= c.not_after
        for f, c in pairs
    )
    self_signed = sum(
        1 for c in certs if c.subject is not None and c.subject == c.issuer
    )

    sni_pairs = [(f.ssl.server_name, c) for f, c in pairs if f.ssl.server_name]
    sni_in_san = bool(sni_pairs) and all(
        any(hostname_matches(san, sni) for san in c.san_dns) for sni, c in sni_pairs
    )
    cn_in_san = bool(certs) and all(
        c.common_name is not None
        and any(hostname_matches(san, c.common_name) for san in c.san_dns)
        for c in certs
    )
    cn_sni = [(c.common_name, sni) for sni, c in sni_pairs if c.common_name]
    same_cn_sni = bool(cn_sni) and all(hostname_matches(cn, sni) for cn, sni in cn_sni)

    snis = [s.server_name for s in ssls if s.server_name]
    exponents = [c.exponent for c in certs if c.exponent is not None]
    path_errors = sum(
        1 for s in ssls
        if s.validation_status is not None and s.validation_status != "ok"
    )

    vec = [
        n,
        _mean(durations),
        dur_sd,
        _ratio(exceeding, len(durations)),
        orig_bytes,
        resp_bytes,
        _ratio(resp_bytes, orig_bytes + resp_bytes),
        _ratio(established, n),
        sum(c.resp_pkts or 0 for c in conns),
        sum(c.orig_pkts or 0 for c in conns),
        period_mu,
        period_sd,
        _ratio(n_ssl, n),
        _mean(key_lens),
        _ratio(tls, n_ssl),
        _mean(validity),
        _pstdev(validity),
        float(valid),
        len({c.cert_id for c in certs}),
        _mean([len(c.san_dns) for c in certs]),
        _mean([len(s.cert_chain_ids) for s in ssls]),
        _ratio(sum(1 for s in ssls if s.cert_chain_ids), n_ssl),
        _ratio(sum(1 for s in ssls if s.server_name), n_ssl),
        _ratio(self_signed, len(certs)),
        float(sni_in_san),
        float(cn_in_san),
        _distinct_ratio([_or_absent(s.server_name or None) for s in ssls]),
        _distinct_ratio([_or_absent(s.subject) for s in ssls]),
        _distinct_ratio([_or_absent(s.issuer) for s in ssls]),
        _distinct_ratio([_or_absent(c.subject) for c in certs]),
        _distinct_ratio([_or_absent(c.issuer) for c in certs]),
        _distinct_ratio([frozenset(_norm_host(d) for d in c.san_dns) for c in certs]),
        _modal_ratio([_or_absent(s.subject) for s in ssls]),
        _modal_ratio([_or_absent(s.issuer) for s in ssls]),
        float(same_cn_sni),
        _mean(exponents),
        float(bool(snis) and all(_plausible_tld(s) for s in snis)),
        _ratio(path_errors, n_ssl),
    ]
    out = np.asarray(vec, dtype=np.float64)
    # huge exponents/byte counts may overflow float64; clamp so output stays finite
    np.nan_to_num(out, copy=False, nan=0.0, posinf=np.finfo(np.float64).max)
    return out


# ---------------------------------------------------------------------------
# datasets


@dataclass
class LabeledDataset:
    """Feature matrix with binary labels (1 = malicious), families and keys."""

    X: np.ndarray
    y: np.ndarray
    families: list
    keys: list
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.feature_names))
        self.y = np.asarray(self.y, dtype=np.int64)
        if not (len(self.X) == len(self.y) == len(self.families) == len(self.keys)):
            raise ValueError("row count mismatch")

    def __len__(self):
        return len(self.y)

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows)
        return LabeledDataset(
            self.X[rows], self.y[rows],
            [self.families[i] for i in rows], [self.keys[i] for i in rows],
            self.feature_names,
        )

    def select_features(self, cols: Sequence[int]) -> "LabeledDataset":
        cols = list(cols)
        return LabeledDataset(
            self.X[:, cols], self.y, list(self.families), list(self.keys),
            tuple(self.feature_names[c] for c in cols),
        )


def build_dataset(aggs: Iterable[ConnectionAggregate]) -> LabeledDataset:
    aggs = list(aggs)
    X = np.array([extract_features(a) for a in aggs]).reshape(-1, N_FEATURES)
    y = [1 if a.label == MALICIOUS else 0 for a in aggs]
    keys = [
        f"{a.capture}/{a.key}" if a.capture else str(a.key) for a in aggs
    ]
    return LabeledDataset(X, y, [a.family for a in aggs], keys)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(dataset: LabeledDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*dataset.feature_names, "label", "family", "key"])
        for row, label, fam, key in zip(dataset.X, dataset.y, dataset.families, dataset.keys):
            w.writerow([*map(_fmt, row), int(label), fam or "", key])


def read_csv(path) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        names = tuple(header[:-3])
        if header[-3:] != ["label", "family", "key"]:
            raise ValueError(f"{path}: trailing columns must be label,family,key")
        X, y, fams, keys = [], [], [], []
        for row in r:
            X.append([float(v) for v in row[: len(names)]])
            y.append(int(row[-3]))
            fams.append(row[-2] or None)
            keys.append(row[-1])
    return LabeledDataset(np.array(X).reshape(-1, len(names)), y, fams, keys, names)


def write_jsonl(dataset: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row, label, fam, key in zip(dataset.X, dataset.y, dataset.families, dataset.keys):
            rec = dict(zip(dataset.feature_names, map(float, row)))
            rec.update(label=int(label), family=fam, key=key)
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# scaling


class EmptyTrainingSet(ValueError):
    pass


@dataclass
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        self.constant = self.std == 0

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(d["mean"], d["std"])


def fit_scaler(train_rows) -> ScalerParams:
    X = np.asarray(train_rows, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyTrainingSet("cannot fit a scaler on zero rows")
    mean = X.mean(axis=0)
    std = np.sqrt(((X - mean) ** 2).mean(axis=0))
    # float noise on a constant column must not turn into a huge scale factor
    std[std <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 0.0
    return ScalerParams(mean, std)


def apply_scaler(params: ScalerParams, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    safe = np.where(params.constant, 1.0, params.std)
    out = (X - params.mean) / safe
    out[..., params.constant] = 0.0
    return out
