"""Reading and writing Zeek (Bro) TSV logs: conn.log, ssl.log and x509.log."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

__all__ = [
    "ZeekLogError",
    "MissingDirective",
    "ArityMismatch",
    "ColumnCountMismatch",
    "TypeDecodeError",
    "WrongLogKind",
    "LogHeader",
    "ConnRecord",
    "SslRecord",
    "X509Record",
    "ParsedLog",
    "parse_header",
    "parse_record",
    "parse_log_file",
    "read_log",
    "write_log",
    "format_log",
    "LAYOUTS",
]


class ZeekLogError(Exception):
    pass


class MissingDirective(ZeekLogError):
    pass


class ArityMismatch(ZeekLogError):
    pass


class ColumnCountMismatch(ZeekLogError):
    pass


class TypeDecodeError(ZeekLogError):
    pass


class WrongLogKind(ZeekLogError):
    pass


@dataclass(frozen=True)
class LogHeader:
    separator: str
    fields: tuple
    types: tuple
    unset_marker: str = "-"
    empty_marker: str = "(empty)"
    set_separator: str = ","
    path: Optional[str] = None

    def __post_init__(self):
        if len(self.fields) != len(self.types):
            raise ArityMismatch(
                f"{len(self.fields)} fields but {len(self.types)} types"
            )

    def index(self) -> dict:
        return {name: i for i, name in enumerate(self.fields)}


# Bro 2.x column layouts. Extra columns in a file are ignored by name, so
# newer Zeek layouts (e.g. conn.log with local_resp) parse as well.
LAYOUTS = {
    "conn": (
        ("ts", "time"),
        ("uid", "string"),
        ("id.orig_h", "addr"),
        ("id.orig_p", "port"),
        ("id.resp_h", "addr"),
        ("id.resp_p", "port"),
        ("proto", "enum"),
        ("service", "string"),
        ("duration", "interval"),
        ("orig_bytes", "count"),
        ("resp_bytes", "count"),
        ("conn_state", "string"),
        ("local_orig", "bool"),
        ("missed_bytes", "count"),
        ("history", "string"),
        ("orig_pkts", "count"),
        ("orig_ip_bytes", "count"),
        ("resp_pkts", "count"),
        ("resp_ip_bytes", "count"),
        ("tunnel_parents", "set[string]"),
    ),
    "ssl": (
        ("ts", "time"),
        ("uid", "string"),
        ("id.orig_h", "addr"),
        ("id.orig_p", "port"),
        ("id.resp_h", "addr"),
        ("id.resp_p", "port"),
        ("version", "string"),
        ("cipher", "string"),
        ("curve", "string"),
        ("server_name", "string"),
        ("resumed", "bool"),
        ("last_alert", "string"),
        ("next_protocol", "string"),
        ("established", "bool"),
        ("cert_chain_fuids", "vector[string]"),
        ("client_cert_chain_fuids", "vector[string]"),
        ("subject", "string"),
        ("issuer", "string"),
        ("client_subject", "string"),
        ("client_issuer", "string"),
        ("validation_status", "string"),
    ),
    "x509": (
        ("ts", "time"),
        ("id", "string"),
        ("certificate.version", "count"),
        ("certificate.serial", "string"),
        ("certificate.subject", "string"),
        ("certificate.issuer", "string"),
        ("certificate.not_valid_before", "time"),
        ("certificate.not_valid_after", "time"),
        ("certificate.key_alg", "string"),
        ("certificate.sig_alg", "string"),
        ("certificate.key_type", "string"),
        ("certificate.key_length", "count"),
        ("certificate.exponent", "string"),
        ("certificate.curve", "string"),
        ("san.dns", "vector[string]"),
        ("san.uri", "vector[string]"),
        ("san.email", "vector[string]"),
        ("san.ip", "vector[addr]"),
        ("basic_constraints.ca", "bool"),
        ("basic_constraints.path_len", "count"),
    ),
}

PROTOCOLS = ("tcp", "udp", "icmp")


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class ConnRecord:
    ts: float
    uid: str
    orig_ip: str
    resp_ip: str
    resp_port: int
    proto: str
    service: Optional[str] = None
    duration: Optional[float] = None
    orig_bytes: Optional[int] = None
    resp_bytes: Optional[int] = None
    conn_state: Optional[str] = None
    orig_pkts: Optional[int] = None
    resp_pkts: Optional[int] = None

    def __post_init__(self):
        if not self.uid:
            raise TypeDecodeError("empty uid")
        if not 0 <= self.resp_port <= 65535:
            raise TypeDecodeError(f"port out of range: {self.resp_port}")
        if self.proto not in PROTOCOLS:
            raise TypeDecodeError(f"unknown protocol: {self.proto!r}")
        for name in ("orig_bytes", "resp_bytes", "orig_pkts", "resp_pkts"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise TypeDecodeError(f"negative {name}")
        if self.duration is not None and self.duration < 0:
            raise TypeDecodeError("negative duration")


@dataclass(frozen=True)
class SslRecord:
    ts: float
    uid: str
    version: Optional[str] = None
    cipher: Optional[str] = None
    server_name: Optional[str] = None
    subject: Optional[str] = None
    issuer: Optional[str] = None
    cert_chain_ids: tuple = ()
    validation_status: Optional[str] = None

    def __post_init__(self):
        if not self.uid:
            raise TypeDecodeError("empty uid")


def common_name(dn: Optional[str]) -> Optional[str]:
    """Return the CN component of an RFC 4514 style distinguished name."""
    if not dn:
        return None
    for part in re.split(r"(?<!\\),", dn):
        key, sep, value = part.partition("=")
        if sep and key.strip().upper() == "CN":
            return value.strip().replace("\\,", ",")
    return None


@dataclass(frozen=True)
class X509Record:
    cert_id: str
    ts: Optional[float] = None
    not_before: Optional[float] = None
    not_after: Optional[float] = None
    subject: Optional[str] = None
    issuer: Optional[str] = None
    key_type: Optional[str] = None
    key_length: Optional[int] = None
    exponent: Optional[int] = None
    san_dns: tuple = ()

    def __post_init__(self):
        if not self.cert_id:
            raise TypeDecodeError("empty certificate id")
        if (
            self.not_before is not None
            and self.not_after is not None
            and self.not_after < self.not_before
        ):
            raise TypeDecodeError("certificate not_after precedes not_before")

    @property
    def common_name(self) -> Optional[str]:
        return common_name(self.subject)


# ---------------------------------------------------------------------------
# cell decoding

_HEX_ESCAPE = re.compile(r"\\x([0-9a-fA-F]{2})")


def _unescape(s: str) -> str:
    if "\\x" not in s:
        return s
    return _HEX_ESCAPE.sub(lambda m: chr(int(m.group(1), 16)), s)


def _escape(s: str, header: LogHeader, in_container: bool = False) -> str:
    specials = {"\\", header.separator, "\n", "\r"}
    if in_container:
        specials.add(header.set_separator)
    out = "".join(
        f"\\x{ord(ch):02x}"
        if ch in specials or (ord(ch) < 256 and not ch.isprintable())
        else ch
        for ch in s
    )
    if out in (header.unset_marker, header.empty_marker):
        out = f"\\x{ord(out[0]):02x}" + out[1:]
    return out


def _decode_bool(s: str) -> bool:
    if s == "T":
        return True
    if s == "F":
        return False
    raise ValueError(f"bad bool {s!r}")


def _decode_count(s: str) -> int:
    v = int(s)
    if v < 0:
        raise ValueError("negative count")
    return v


def _decode_port(s: str) -> int:
    v = int(s)
    if not 0 <= v <= 65535:
        raise ValueError("port out of range")
    return v


def _decode_float(s: str) -> float:
    v = float(s)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError("non-finite")
    return v


_SCALARS: dict = {
    "time": _decode_float,
    "interval": _decode_float,
    "double": _decode_float,
    "count": _decode_count,
    "int": int,
    "port": _decode_port,
    "bool": _decode_bool,
}


def _scalar_decoder(ztype: str) -> Callable[[str], object]:
    return _SCALARS.get(ztype, _unescape)


def _container_inner(ztype: str) -> Optional[str]:
    for prefix in ("vector[", "set["):
        if ztype.startswith(prefix) and ztype.endswith("]"):
            return ztype[len(prefix) : -1]
    return None


def decode_cell(raw: str, ztype: str, header: LogHeader):
    """Decode one cell. Returns None for the unset marker."""
    if raw == header.unset_marker:
        return None
    inner = _container_inner(ztype)
    if inner is not None:
        if raw == header.empty_marker:
            return ()
        dec = _scalar_decoder(inner)
        return tuple(dec(x) for x in raw.split(header.set_separator))
    dec = _scalar_decoder(ztype)
    if raw == header.empty_marker:
        if dec is not _unescape:
            raise ValueError(f"empty marker in {ztype} column")
        return ""
    return dec(raw)


def encode_cell(value, ztype: str, header: LogHeader) -> str:
    if value is None:
        return header.unset_marker
    inner = _container_inner(ztype)
    if inner is not None:
        if len(value) == 0:
            return header.empty_marker
        return header.set_separator.join(
            _encode_scalar(v, inner, header, in_container=True) for v in value
        )
    return _encode_scalar(value, ztype, header)


def _encode_scalar(value, ztype: str, header: LogHeader, in_container=False) -> str:
    if ztype == "bool":
        return "T" if value else "F"
    if ztype in ("time", "interval", "double"):
        text = f"{value:.6f}"
        return text if float(text) == value else repr(float(value))
    if isinstance(value, str):
        if value == "":
            return "" if in_container else header.empty_marker
        return _escape(value, header, in_container)
    return str(value)


# ---------------------------------------------------------------------------
# header


def _directive(line: str, separator: str):
    body = line[1:].rstrip("\r\n")
    if separator in body:
        name, _, rest = body.partition(separator)
        return name, rest
    name, _, rest = body.partition(" ")
    return name, rest


def parse_header(lines: Iterable[str]) -> LogHeader:
    """Build a header from the directive lines of a log.

    Non-directive lines are ignored, so the whole file may be passed in.
    """
    separator = "\t"
    values: dict = {}
    for line in lines:
        if not line.startswith("#"):
            continue
        if line.startswith("#separator"):
            separator = _unescape(line[len("#separator"):].strip())
            continue
        name, rest = _directive(line, separator)
        values[name] = rest
    for needed in ("fields", "types"):
        if needed not in values:
            raise MissingDirective(f"#{needed} directive absent")
    fields = tuple(values["fields"].split(separator))
    types = tuple(values["types"].split(separator))
    return LogHeader(
        separator=separator,
        fields=fields,
        types=types,
        unset_marker=values.get("unset_field", "-"),
        empty_marker=values.get("empty_field", "(empty)"),
        set_separator=values.get("set_separator", ","),
        path=values.get("path"),
    )


# ---------------------------------------------------------------------------
# per-kind record construction


def _get(row: dict, name: str):
    return row.get(name)


def _require(row: dict, name: str):
    v = row.get(name)
    if v is None:
        raise TypeDecodeError(f"required column {name} unset or missing")
    return v


def _build_conn(row: dict) -> ConnRecord:
    return ConnRecord(
        ts=_require(row, "ts"),
        uid=_require(row, "uid"),
        orig_ip=_require(row, "id.orig_h"),
        resp_ip=_require(row, "id.resp_h"),
        resp_port=_require(row, "id.resp_p"),
        proto=_require(row, "proto"),
        service=_get(row, "service"),
        duration=_get(row, "duration"),
        orig_bytes=_get(row, "orig_bytes"),
        resp_bytes=_get(row, "resp_bytes"),
        conn_state=_get(row, "conn_state"),
        orig_pkts=_get(row, "orig_pkts"),
        resp_pkts=_get(row, "resp_pkts"),
    )


def _build_ssl(row: dict) -> SslRecord:
    return SslRecord(
        ts=_require(row, "ts"),
        uid=_require(row, "uid"),
        version=_get(row, "version"),
        cipher=_get(row, "cipher"),
        server_name=_get(row, "server_name"),
        subject=_get(row, "subject"),
        issuer=_get(row, "issuer"),
        cert_chain_ids=_get(row, "cert_chain_fuids") or (),
        validation_status=_get(row, "validation_status"),
    )


def _build_x509(row: dict) -> X509Record:
    exponent = _get(row, "certificate.exponent")
    if exponent is not None:
        try:
            exponent = int(exponent)
        except ValueError:
            raise TypeDecodeError(f"bad exponent {exponent!r}") from None
    return X509Record(
        cert_id=_require(row, "id"),
        ts=_get(row, "ts"),
        not_before=_get(row, "certificate.not_valid_before"),
        not_after=_get(row, "certificate.not_valid_after"),
        subject=_get(row, "certificate.subject"),
        issuer=_get(row, "certificate.issuer"),
        key_type=_get(row, "certificate.key_type"),
        key_length=_get(row, "certificate.key_length"),
        exponent=exponent,
        san_dns=_get(row, "san.dns") or (),
    )


_BUILDERS = {"conn": _build_conn, "ssl": _build_ssl, "x509": _build_x509}
_WANTED = {kind: {name for name, _ in cols} for kind, cols in LAYOUTS.items()}


def parse_record(line: str, header: LogHeader, kind: Optional[str] = None):
    """Decode one data line.

    With ``kind`` set, a typed record is returned; otherwise a dict of every
    decoded column. Raises ColumnCountMismatch or TypeDecodeError.
    """
    cells = line.rstrip("\r\n").split(header.separator)
    if len(cells) != len(header.fields):
        raise ColumnCountMismatch(
            f"expected {len(header.fields)} columns, got {len(cells)}"
        )
    wanted = _WANTED.get(kind) if kind else None
    row = {}
    for name, ztype, raw in zip(header.fields, header.types, cells):
        if wanted is not None and name not in wanted:
            continue
        try:
            row[name] = decode_cell(raw, ztype, header)
        except (ValueError, TypeError) as exc:
            raise TypeDecodeError(f"{name}: {exc}") from None
    if kind is None:
        return row
    return _BUILDERS[kind](row)


@dataclass
class ParsedLog:
    """Lazy record iterator over one log; ``skipped`` fills in as it runs."""

    header: LogHeader
    kind: str
    _lines: Iterator[str] = field(repr=False)
    yielded: int = 0
    skipped: int = 0
    errors: list = field(default_factory=list, repr=False)

    def __iter__(self):
        for lineno, line in self._lines:
            if line.startswith("#") or not line.strip("\r\n"):
                continue
            try:
                rec = parse_record(line, self.header, self.kind)
            except ZeekLogError as exc:
                self.skipped += 1
                self.errors.append((lineno, str(exc)))
                continue
            self.yielded += 1
            yield rec

    @property
    def data_lines(self) -> int:
        return self.yielded + self.skipped


def parse_log_file(stream: Iterable[str], expected_kind: str) -> ParsedLog:
    if expected_kind not in _BUILDERS:
        raise ValueError(f"unknown log kind {expected_kind!r}")
    it = enumerate(stream, 1)
    head = []
    pending = None
    for lineno, line in it:
        if line.startswith("#"):
            head.append(line)
            continue
        pending = (lineno, line)
        break
    header = parse_header(head)
    if header.path is not None and header.path != expected_kind:
        raise WrongLogKind(f"#path is {header.path!r}, expected {expected_kind!r}")

    def lines():
        if pending is not None:
            yield pending
        yield from it

    return ParsedLog(header=header, kind=expected_kind, _lines=lines())


def read_log(path, kind: str):
    """Parse a whole log file. Returns (records, ParsedLog) after exhaustion."""
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        parsed = parse_log_file(fh, kind)
        records = list(parsed)
    return records, parsed


# ---------------------------------------------------------------------------
# writing


def _row_of(rec, kind: str) -> dict:
    if kind == "conn":
        return {
            "ts": rec.ts, "uid": rec.uid, "id.orig_h": rec.orig_ip,
            "id.resp_h": rec.resp_ip, "id.resp_p": rec.resp_port,
            "proto": rec.proto, "service": rec.service,
            "duration": rec.duration, "orig_bytes": rec.orig_bytes,
            "resp_bytes": rec.resp_bytes, "conn_state": rec.conn_state,
            "orig_pkts": rec.orig_pkts, "resp_pkts": rec.resp_pkts,
        }
    if kind == "ssl":
        return {
            "ts": rec.ts, "uid": rec.uid, "version": rec.version,
            "cipher": rec.cipher, "server_name": rec.server_name,
            "cert_chain_fuids": rec.cert_chain_ids, "subject": rec.subject,
            "issuer": rec.issuer, "validation_status": rec.validation_status,
        }
    exponent = None if rec.exponent is None else str(rec.exponent)
    return {
        "ts": rec.ts, "id": rec.cert_id,
        "certificate.subject": rec.subject, "certificate.issuer": rec.issuer,
        "certificate.not_valid_before": rec.not_before,
        "certificate.not_valid_after": rec.not_after,
        "certificate.key_type": rec.key_type,
        "certificate.key_length": rec.key_length,
        "certificate.exponent": exponent, "san.dns": rec.san_dns,
    }


def format_log(records: Iterable, kind: str, extra: Optional[dict] = None,
               open_ts: str = "1970-01-01-00-00-00") -> str:
    """Serialise records as a Zeek TSV log in the Bro 2.x layout.

    Columns the record types do not carry are written unset, unless
    ``extra`` maps ``(uid_or_id, column)`` to a value.
    """
    cols = LAYOUTS[kind]
    header = LogHeader("\t", tuple(n for n, _ in cols), tuple(t for _, t in cols),
                       path=kind)
    out = [
        "#separator \\x09",
        "#set_separator\t,",
        "#empty_field\t(empty)",
        "#unset_field\t-",
        f"#path\t{kind}",
        f"#open\t{open_ts}",
        "#fields\t" + "\t".join(header.fields),
        "#types\t" + "\t".join(header.types),
    ]
    for rec in records:
        row = _row_of(rec, kind)
        if extra:
            key = rec.cert_id if kind == "x509" else rec.uid
            for (k, col), v in extra.items():
                if k == key:
                    row[col] = v
        out.append("\t".join(
            encode_cell(row.get(name), ztype, header) for name, ztype in cols
        ))
    out.append(f"#close\t{open_ts}")
    return "\n".join(out) + "\n"


def write_log(path, records: Iterable, kind: str, **kwargs) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_log(records, kind, **kwargs))
