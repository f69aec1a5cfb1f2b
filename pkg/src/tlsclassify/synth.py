"""Synthetic Zeek captures with planted malicious-traffic signals.

Every aggregate is one client host talking to one server over TLS. A latent
"certificate strength" z per server drives key length and validity period
together (so the two correlate), and its mean is lower for malicious
servers. Malicious hosts beacon with a period drawn from a narrow band in
the middle of the benign period range; benign periods sit on both sides of
that band with the same overall mean, so the period carries no linear
signal but splits cleanly for threshold models. Timing jitter is drawn
independently of everything else.
"""

from __future__ import annotations

import json
import os
import string
from dataclasses import asdict, dataclass

import numpy as np

from .flows import Capture, LabelSource, write_manifest
from .ml.config import derive_seed
from .zeek import ConnRecord, SslRecord, X509Record, write_log

DAY = 86400.0
CAPTURE_START = 1500000000.0
FAMILIES = ("Dridex", "Trickbot", "WannaCry", "Zbot")
CAS = (
    "CN=DigiCert SHA2 Secure Server CA,O=DigiCert Inc,C=US",
    "CN=Let's Encrypt Authority X3,O=Let's Encrypt,C=US",
    "CN=GlobalSign Organization Validation CA - SHA256 - G2,O=GlobalSign nv-sa,C=BE",
    "CN=COMODO RSA Domain Validation Secure Server CA,O=COMODO CA Limited,C=GB",
)
WORDS = (
    "alpha", "bravo", "cloud", "delta", "echo", "forum", "gamma", "harbor",
    "index", "jolly", "kilo", "lumen", "metro", "nova", "orbit", "pixel",
    "quartz", "river", "solar", "tango", "umbra", "vector", "willow", "yonder",
)


@dataclass
class SynthSpec:
    n_benign: int = 1000
    n_malicious: int = 1000
    flows_min: int = 3
    flows_max: int = 15
    n_benign_hosts: int = 25
    n_infected_hosts: int = 20
    families: tuple = FAMILIES
    seed: int = 0
    # probability that a flow after the first carries no TLS
    non_ssl_prob: float = 0.1
    resumed_prob: float = 0.15
    # certificate strength z ~ N(+shift, 1) benign, N(-shift, 1) malicious
    strength_shift: float = 0.6
    # validity days = validity_base + validity_slope * z + N(0, validity_noise)
    validity_base: float = 400.0
    validity_slope: float = 250.0
    validity_noise: float = 60.0
    self_signed_benign: float = 0.03
    self_signed_malicious: float = 0.35
    expired_benign: float = 0.03
    expired_malicious: float = 0.2
    sni_benign: float = 0.95
    sni_malicious: float = 0.7
    # beacon period band for malicious hosts; benign periods avoid it
    beacon_low: float = 50.0
    beacon_high: float = 70.0
    benign_period_low: float = 10.0
    beacon_fraction: float = 1.0
    jitter_max: float = 2.5

    def __post_init__(self):
        self.families = tuple(self.families)
        if min(self.n_benign, self.n_malicious) < 0:
            raise ValueError("counts must be >= 0")
        if not 1 <= self.flows_min <= self.flows_max:
            raise ValueError("need 1 <= flows_min <= flows_max")
        # standardised noise over at most n-1 gaps is bounded by sqrt(n-2)
        if self.jitter_max * np.sqrt(max(self.flows_max - 2, 1)) >= self.benign_period_low:
            raise ValueError("jitter too large for the shortest period")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["families"] = list(self.families)
        return d


class _Gen:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.rng = np.random.default_rng(derive_seed(spec.seed, "synth"))
        self.conns, self.ssls, self.certs = [], [], []
        self._ids = set()

    def uid(self, prefix: str) -> str:
        alphabet = string.ascii_letters + string.digits
        while True:
            s = prefix + "".join(alphabet[i] for i in self.rng.integers(0, len(alphabet), 17))
            if s not in self._ids:
                self._ids.add(s)
                return s

    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def domain(self, malicious: bool) -> str:
        rng = self.rng
        if malicious:
            n = int(rng.integers(8, 13))
            name = "".join(string.ascii_lowercase[i] for i in rng.integers(0, 26, n))
            return name + str(rng.choice([".info", ".top", ".xyz", ".net", ".biz"]))
        word = WORDS[int(rng.integers(len(WORDS)))]
        return f"{word}{int(rng.integers(1, 999))}.{rng.choice(['com', 'org', 'net', 'io'])}"

    def period(self, malicious: bool, family_idx: int) -> float:
        s, rng = self.spec, self.rng
        if malicious and self.chance(s.beacon_fraction):
            # families occupy adjacent slices of the beacon band
            k = max(1, len(s.families))
            width = (s.beacon_high - s.beacon_low) / k
            lo = s.beacon_low + width * (family_idx % k)
            return float(rng.uniform(lo, lo + width))
        # mirror-image halves around the band centre keep the mean equal
        center = (s.beacon_low + s.beacon_high) / 2
        off = rng.uniform(s.beacon_high - center, center - s.benign_period_low)
        return float(center + off if self.chance(0.5) else center - off)

    def certificate(self, domain: str, malicious: bool, z: float, self_signed: bool,
                    expired: bool) -> X509Record:
        s, rng = self.spec, self.rng
        key_len = 1024 if z < -0.6 else (2048 if z < 0.9 else 4096)
        validity = s.validity_base + s.validity_slope * z + rng.normal(0, s.validity_noise)
        validity = float(np.clip(validity, 30.0, 1500.0))
        if expired:
            not_after = CAPTURE_START - float(rng.uniform(1, 120)) * DAY
            not_before = not_after - validity * DAY
        else:
            not_before = CAPTURE_START - float(rng.uniform(1, 0.9 * validity)) * DAY
            not_after = not_before + validity * DAY
        not_before, not_after = round(not_before), round(not_after)
        org = "" if malicious and self.chance(0.5) else f",O={domain.split('.')[0].title()} Ltd"
        subject = f"CN={domain}{org},C=US"
        issuer = subject if self_signed else CAS[int(rng.integers(len(CAS)))]
        if malicious and self.chance(0.15):
            san = ("www." + domain,)
        elif malicious and self.chance(0.3):
            san = (domain,)
        elif self.chance(0.5):
            san = (domain, "www." + domain)
        else:
            san = ("*." + domain, domain)
        return X509Record(
            cert_id=self.uid("F"), ts=CAPTURE_START, not_before=float(not_before),
            not_after=float(not_after), subject=subject, issuer=issuer,
            key_type="rsa", key_length=key_len,
            exponent=3 if malicious and self.chance(0.05) else 65537, san_dns=san,
        )

    def aggregate(self, src: str, dst: str, malicious: bool, family_idx: int):
        s, rng = self.spec, self.rng
        z = float(rng.normal(-s.strength_shift if malicious else s.strength_shift, 1.0))
        domain = self.domain(malicious)
        self_signed = self.chance(s.self_signed_malicious if malicious else s.self_signed_benign)
        expired = self.chance(s.expired_malicious if malicious else s.expired_benign)
        certs = [self.certificate(domain, malicious, z, self_signed, expired)]
        if self.chance(0.1):
            certs.append(self.certificate(domain, malicious, z, self_signed, expired))
        intermediate = None if self_signed else self.uid("F")
        if self_signed:
            status = "self signed certificate"
        elif expired:
            status = "certificate has expired"
        else:
            status = "ok"
        p_sni = s.sni_malicious if malicious else s.sni_benign
        tls_p = 0.9 if malicious else 0.98
        port = 443 if self.chance(0.9) else int(rng.choice([8443, 4443, 9443]))

        n = int(rng.integers(s.flows_min, s.flows_max + 1))
        period = self.period(malicious, family_idx)
        jitter = float(rng.uniform(0.0, s.jitter_max))
        # standardised noise: gaps have mean exactly `period` and population
        # standard deviation exactly `jitter`, whatever the flow count
        noise = rng.normal(size=max(n - 1, 0))
        if len(noise) >= 2:
            noise = (noise - noise.mean()) / (noise.std() or 1.0)
        else:
            noise = np.zeros_like(noise)
        t = CAPTURE_START + float(rng.uniform(0, 3600))
        first_ssl = len(self.ssls)
        for k in range(n):
            if k:
                t += period + jitter * float(noise[k - 1])
            uid = self.uid("C")
            with_ssl = k == 0 or not self.chance(s.non_ssl_prob)
            ob = int(rng.lognormal(6.5, 1.0))
            rb = int(rng.lognormal(8.0, 1.2))
            self.conns.append(ConnRecord(
                ts=round(t, 6), uid=uid, orig_ip=src, resp_ip=dst, resp_port=port,
                proto="tcp", service="ssl" if with_ssl else None,
                duration=round(float(rng.lognormal(0.0, 1.0)), 6),
                orig_bytes=ob, resp_bytes=rb,
                conn_state=str(rng.choice(["SF", "SF", "SF", "SF", "S1", "RSTO", "S0", "OTH"])),
                orig_pkts=ob // 500 + 3, resp_pkts=rb // 1000 + 2,
            ))
            if not with_ssl:
                continue
            cert = certs[int(rng.integers(len(certs)))]
            if k and self.chance(s.resumed_prob):
                chain = ()  # resumed session: no certificate exchanged
            elif intermediate is None:
                chain = (cert.cert_id,)
            else:
                chain = (cert.cert_id, intermediate)
            self.ssls.append(SslRecord(
                ts=round(t + 0.01, 6), uid=uid,
                version="TLSv12" if self.chance(tls_p) else str(rng.choice(["TLSv10", "SSLv3"])),
                cipher="TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256",
                server_name=domain if self.chance(p_sni) else None,
                subject=cert.subject, issuer=cert.issuer,
                cert_chain_ids=chain, validation_status=status,
            ))
        # only certificates some handshake actually presented reach x509.log
        shown = {r.cert_chain_ids[0] for r in self.ssls[first_ssl:] if r.cert_chain_ids}
        self.certs.extend(c for c in certs if c.cert_id in shown)


def generate(spec: SynthSpec) -> tuple:
    """Build records in memory: ``(conns, ssls, x509s, LabelSource)``."""
    g = _Gen(spec)
    benign_hosts = [f"192.168.1.{10 + i}" for i in range(spec.n_benign_hosts)]
    infected = [f"192.168.2.{10 + i}" for i in range(spec.n_infected_hosts)]
    family_of = {ip: spec.families[i % len(spec.families)]
                 for i, ip in enumerate(infected)} if spec.families else {}
    used = set()
    plan = [False] * spec.n_benign + [True] * spec.n_malicious
    g.rng.shuffle(plan)
    for i, malicious in enumerate(plan):
        hosts = infected if malicious else benign_hosts
        src = hosts[int(g.rng.integers(len(hosts)))]
        dst = f"{(i >> 16) % 200 + 20}.{(i >> 8) & 255}.{i & 255}.{int(g.rng.integers(1, 255))}"
        fam_idx = spec.families.index(family_of[src]) if malicious and family_of else 0
        g.aggregate(src, dst, malicious, fam_idx)
        if malicious:
            used.add(src)
    g.conns.sort(key=lambda c: (c.ts, c.uid))
    g.ssls.sort(key=lambda r: (r.ts, r.uid))
    labels = LabelSource(frozenset(used), {ip: f for ip, f in family_of.items() if ip in used})
    return g.conns, g.ssls, g.certs, labels


def write_capture(spec: SynthSpec, out_dir, name: str = "synthetic") -> str:
    """Write conn/ssl/x509 logs, a manifest and a metadata file; return the
    manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    conns, ssls, certs, labels = generate(spec)
    paths = {kind: os.path.join(out_dir, f"{kind}.log") for kind in ("conn", "ssl", "x509")}
    write_log(paths["conn"], conns, "conn", open_ts="2017-07-14-02-40-00")
    write_log(paths["ssl"], ssls, "ssl", open_ts="2017-07-14-02-40-00")
    write_log(paths["x509"], certs, "x509", open_ts="2017-07-14-02-40-00")
    manifest = os.path.join(out_dir, "manifest.json")
    write_manifest(manifest, [Capture(name, paths["conn"], paths["ssl"], paths["x509"], labels)])
    meta = {
        "spec": spec.to_dict(),
        "planted_signals": {
            "avg_key_len": "lower for malicious (key length falls with certificate strength)",
            "avg_of_certificate_len": "shorter validity for malicious; correlated with key length",
            "self_signed_ratio": [spec.self_signed_benign, spec.self_signed_malicious],
            "is_valid_certificate": ["expired prob", spec.expired_benign, spec.expired_malicious],
            "SNI_ssl_ratio": [spec.sni_benign, spec.sni_malicious],
            "periodicity_average": "malicious inside the beacon band, benign outside with equal mean",
            "periodicity_standard_deviation": "label independent",
        },
        "counts": {"conn": len(conns), "ssl": len(ssls), "x509": len(certs)},
    }
    with open(os.path.join(out_dir, "synth_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
