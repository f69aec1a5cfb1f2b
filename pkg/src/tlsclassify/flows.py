"""Linking conn/ssl/x509 records and grouping them into labeled 4-tuples."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional

from .zeek import ConnRecord, SslRecord, X509Record

BENIGN = "benign"
MALICIOUS = "malicious"


class ConnKey(NamedTuple):
    src_ip: str
    dst_ip: str
    dst_port: int
    proto: str

    def __str__(self):
        return f"{self.src_ip}|{self.dst_ip}|{self.dst_port}|{self.proto}"

    @classmethod
    def of(cls, conn: ConnRecord) -> "ConnKey":
        return cls(conn.orig_ip, conn.resp_ip, conn.resp_port, conn.proto)

    @classmethod
    def parse(cls, text: str) -> "ConnKey":
        src, dst, port, proto = text.split("|")
        return cls(src, dst, int(port), proto)


@dataclass(frozen=True)
class JoinedFlow:
    conn: ConnRecord
    ssl: Optional[SslRecord] = None
    cert: Optional[X509Record] = None

    def __post_init__(self):
        if self.cert is not None:
            if self.ssl is None:
                raise ValueError("certificate attached without ssl record")
            if not self.ssl.cert_chain_ids or self.ssl.cert_chain_ids[0] != self.cert.cert_id:
                raise ValueError("certificate is not the first chain element")
        if self.ssl is not None and self.ssl.uid != self.conn.uid:
            raise ValueError("ssl uid does not match conn uid")


@dataclass
class ConnectionAggregate:
    key: ConnKey
    flows: list
    label: Optional[str] = None
    family: Optional[str] = None
    capture: Optional[str] = None

    def __post_init__(self):
        if not self.flows:
            raise ValueError("aggregate needs at least one flow")

    @property
    def ssl_flows(self) -> list:
        return [f for f in self.flows if f.ssl is not None]


@dataclass(frozen=True)
class LabelSource:
    infected_ips: frozenset = frozenset()
    family_by_ip: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "infected_ips", frozenset(self.infected_ips))
        stray = set(self.family_by_ip) - self.infected_ips
        if stray:
            raise ValueError(f"family mapping for non-infected IPs: {sorted(stray)}")


def join_records(conns: Iterable[ConnRecord], ssls: Iterable[SslRecord],
                 x509s: Iterable[X509Record]) -> list:
    """Attach each conn record's ssl record (by uid) and end-entity cert.

    The first ssl record seen for a uid wins; so does the first x509 record
    for a certificate id. Links that do not resolve leave the part absent.
    """
    ssl_by_uid: dict = {}
    for s in ssls:
        ssl_by_uid.setdefault(s.uid, s)
    cert_by_id: dict = {}
    for c in x509s:
        cert_by_id.setdefault(c.cert_id, c)

    out = []
    for conn in conns:
        ssl = ssl_by_uid.get(conn.uid)
        cert = None
        if ssl is not None and ssl.cert_chain_ids:
            cert = cert_by_id.get(ssl.cert_chain_ids[0])
        out.append(JoinedFlow(conn, ssl, cert))
    return out


def _flow_order(flow: JoinedFlow):
    return (flow.conn.ts, flow.conn.uid)


def group_by_key(flows: Iterable[JoinedFlow]) -> tuple:
    """Group flows by 4-tuple.

    Returns ``(aggregates, dropped)``: aggregates sorted by key, each with
    flows in (ts, uid) order, and the number of flows discarded because
    their 4-tuple had no ssl-bearing flow.
    """
    groups: dict = {}
    for f in flows:
        groups.setdefault(ConnKey.of(f.conn), []).append(f)
    aggs = []
    dropped = 0
    for key in sorted(groups, key=lambda k: (k.src_ip, k.dst_ip, k.dst_port, k.proto)):
        members = groups[key]
        if not any(f.ssl is not None for f in members):
            dropped += len(members)
            continue
        aggs.append(ConnectionAggregate(key, sorted(members, key=_flow_order)))
    return aggs, dropped


def label_aggregates(aggs: Iterable[ConnectionAggregate], source: LabelSource) -> list:
    """Label by source IP: infected hosts make every aggregate they originate malicious."""
    out = []
    for agg in aggs:
        src = agg.key.src_ip
        if src in source.infected_ips:
            label, family = MALICIOUS, source.family_by_ip.get(src)
        else:
            label, family = BENIGN, None
        out.append(ConnectionAggregate(agg.key, agg.flows, label, family, agg.capture))
    return out


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class Capture:
    name: str
    conn: str
    ssl: str
    x509: str
    labels: LabelSource


def load_manifest(path) -> list:
    """Read a dataset manifest.

    Schema::

        {"captures": [{"name": str, "conn": path, "ssl": path, "x509": path,
                       "infected_ips": [ip, ...],
                       "families": {ip: family, ...}}]}

    Relative paths resolve against the manifest's directory.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    caps = []
    for i, entry in enumerate(doc["captures"]):
        paths = {k: os.path.join(base, entry[k]) for k in ("conn", "ssl", "x509")}
        caps.append(Capture(
            name=entry.get("name", f"capture{i}"),
            labels=LabelSource(frozenset(entry.get("infected_ips", ())),
                               dict(entry.get("families", {}))),
            **paths,
        ))
    return caps


def write_manifest(path, captures: Iterable[Capture]) -> None:
    base = os.path.dirname(os.path.abspath(path))
    doc = {"captures": [
        {
            "name": c.name,
            "conn": os.path.relpath(c.conn, base),
            "ssl": os.path.relpath(c.ssl, base),
            "x509": os.path.relpath(c.x509, base),
            "infected_ips": sorted(c.labels.infected_ips),
            "families": dict(sorted(c.labels.family_by_ip.items())),
        }
        for c in captures
    ]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
