"""EDF biosignal container: strict parser plus a writer for fixtures.

The format is a 256-byte fixed header, then 256 bytes of header per signal,
then data records of interleaved 16-bit little-endian samples. Header fields
are fixed-width ASCII; every parse failure names the byte offset at fault.
Digital values map to physical units by the per-signal affine calibration

    scale = (phys_max - phys_min) / (dig_max - dig_min)
    physical = scale * (digital - dig_min) + phys_min
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import DataError, EdfParseError

# Bipolar montage used by the scalp recordings this pipeline targets.
CHB_MONTAGE = (
    "FP1-F7", "F7-T7", "T7-P7", "P7-O1",
    "FP1-F3", "F3-C3", "C3-P3", "P3-O1",
    "FP2-F4", "F4-C4", "C4-P4", "P4-O2",
    "FP2-F8", "F8-T8", "T8-P8", "P8-O2",
    "FZ-CZ", "CZ-PZ",
    "P7-T7", "T7-FT9", "FT9-FT10", "FT10-T8",
)

_FIXED_FIELDS = (
    ("version", 8), ("patient", 80), ("recording", 80),
    ("startdate", 8), ("starttime", 8), ("header_bytes", 8),
    ("reserved", 44), ("n_records", 8), ("record_seconds", 8), ("n_signals", 4),
)
_SIGNAL_FIELDS = (
    ("label", 16), ("transducer", 80), ("unit", 8),
    ("phys_min", 8), ("phys_max", 8), ("dig_min", 8), ("dig_max", 8),
    ("prefilter", 80), ("samples_per_record", 8), ("reserved2", 32),
)


@dataclass
class EegRecord:
    """One recording: float64 physical samples, uniformly sampled."""

    samples: np.ndarray          # (channels, n) physical units
    rate: float                  # Hz, shared by every retained channel
    channels: tuple              # labels, in retained order
    start_epoch: float           # seconds since the Unix epoch
    calibration: tuple           # per channel (phys_min, phys_max, dig_min, dig_max)
    patient: str = ""
    recording: str = ""

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise DataError(f"samples must be (channels, n), got "
                            f"{self.samples.shape}")
        if self.rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.rate}")
        if len(self.channels) != self.samples.shape[0]:
            raise DataError(f"{len(self.channels)} labels for "
                            f"{self.samples.shape[0]} channels")

    @property
    def duration(self) -> float:
        return self.samples.shape[1] / self.rate


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def text(self, width: int) -> str:
        if self.pos + width > len(self.raw):
            raise EdfParseError(self.pos, f"truncated: needed {width} more header bytes")
        out = self.raw[self.pos:self.pos + width].decode("latin-1")
        self.pos += width
        return out

    def number(self, width: int, kind, what: str):
        at = self.pos
        txt = self.text(width).strip()
        try:
            return kind(txt)
        except ValueError:
            raise EdfParseError(at, f"non-numeric {what}: {txt!r}") from None


def _parse_start(date_s: str, time_s: str, offset: int) -> float:
    try:
        d, m, y = (int(p) for p in date_s.strip().split("."))
        hh, mm, ss = (int(p) for p in time_s.strip().split("."))
    except ValueError:
        raise EdfParseError(offset, f"bad start stamp {date_s!r} {time_s!r}") from None
    year = 2000 + y if y <= 84 else 1900 + y
    try:
        dt = datetime(year, m, d, hh, mm, ss, tzinfo=timezone.utc)
    except ValueError as e:
        raise EdfParseError(offset, f"bad start stamp: {e}") from None
    return dt.timestamp()


def parse_edf(data: bytes, montage=None) -> EegRecord:
    """Parse EDF bytes into an EegRecord.

    montage: optional label sequence; retained channels are the first
    occurrence of each montage label, in montage order, matched after
    stripping and case folding. None keeps every signal. All retained
    signals must share one sampling rate.
    """
    r = _Reader(data)
    head = {}
    for name, width in _FIXED_FIELDS:
        if name in ("header_bytes", "n_records", "n_signals"):
            head[name] = r.number(width, int, name)
        elif name == "record_seconds":
            head[name] = r.number(width, float, name)
        else:
            head[name] = r.text(width)
    ns = head["n_signals"]
    if ns < 1:
        raise EdfParseError(252, f"signal count must be positive, got {ns}")
    expected_header = 256 + 256 * ns
    if head["header_bytes"] != expected_header:
        raise EdfParseError(184, f"header byte count {head['header_bytes']} "
                                 f"!= 256 + 256*{ns}")
    if len(data) < expected_header:
        raise EdfParseError(len(data), f"truncated header: {len(data)} bytes, "
                                       f"need {expected_header}")
    if head["record_seconds"] <= 0:
        raise EdfParseError(244, f"record duration must be positive, "
                                 f"got {head['record_seconds']}")

    # signal headers are stored field-major: all labels, then all transducers, ...
    sig = {name: [] for name, _ in _SIGNAL_FIELDS}
    for name, width in _SIGNAL_FIELDS:
        for i in range(ns):
            if name in ("phys_min", "phys_max"):
                sig[name].append(r.number(width, float, f"{name}[{i}]"))
            elif name in ("dig_min", "dig_max", "samples_per_record"):
                sig[name].append(r.number(width, int, f"{name}[{i}]"))
            else:
                sig[name].append(r.text(width))

    labels = [s.strip() for s in sig["label"]]
    n_records = head["n_records"]
    spr = sig["samples_per_record"]
    record_bytes = 2 * sum(spr)
    payload = len(data) - expected_header
    if n_records == -1:
        if record_bytes == 0 or payload % record_bytes:
            raise EdfParseError(expected_header,
                                f"payload {payload} bytes is not a whole number "
                                f"of {record_bytes}-byte records")
        n_records = payload // record_bytes
    if payload != n_records * record_bytes:
        raise EdfParseError(expected_header,
                            f"payload {payload} bytes != {n_records} records "
                            f"x {record_bytes} bytes")

    if montage is None:
        keep = list(range(ns))
        kept_labels = labels
    else:
        folded = [l.upper() for l in labels]
        keep = []
        missing = []
        for want in montage:
            try:
                keep.append(folded.index(want.strip().upper()))
            except ValueError:
                missing.append(want)
        if missing:
            raise DataError(f"montage labels not in record: {missing}")
        kept_labels = [w.strip() for w in montage]

    rates = {spr[i] / head["record_seconds"] for i in keep}
    if len(rates) != 1:
        raise DataError(f"retained channels disagree on sample rate: {sorted(rates)}")
    rate = rates.pop()

    flat = np.frombuffer(data, dtype="<i2", offset=expected_header,
                         count=n_records * sum(spr))
    per_record = flat.reshape(n_records, sum(spr))
    bounds = np.cumsum([0] + spr)
    out = np.empty((len(keep), n_records * spr[keep[0]] if keep else 0), dtype=np.float64)
    calib = []
    for row, i in enumerate(keep):
        if sig["dig_max"][i] == sig["dig_min"][i]:
            raise EdfParseError(256 + (16 + 80 + 8 + 8 + 8) * ns + 8 * i,
                                f"signal {i} has zero digital range")
        scalefac = (sig["phys_max"][i] - sig["phys_min"][i]) / \
                   (sig["dig_max"][i] - sig["dig_min"][i])
        # int16 must widen before the affine map or the offset overflows
        dig = per_record[:, bounds[i]:bounds[i + 1]].reshape(-1).astype(np.float64)
        out[row] = scalefac * (dig - sig["dig_min"][i]) + sig["phys_min"][i]
        calib.append((sig["phys_min"][i], sig["phys_max"][i],
                      sig["dig_min"][i], sig["dig_max"][i]))

    return EegRecord(
        samples=out,
        rate=rate,
        channels=tuple(kept_labels),
        start_epoch=_parse_start(head["startdate"], head["starttime"], 168),
        calibration=tuple(calib),
        patient=head["patient"].strip(),
        recording=head["recording"].strip(),
    )


def _field(value: str, width: int, offset_hint: str) -> bytes:
    b = value.encode("latin-1")
    if len(b) > width:
        raise ValueError(f"{offset_hint} field {value!r} exceeds {width} bytes")
    return b.ljust(width)


def _num_field(value, width: int) -> bytes:
    for fmt in (f"{value:.10g}", f"{value:.6g}", f"{value:.4g}", f"{value:.2g}"):
        if len(fmt) <= width:
            return fmt.encode("ascii").ljust(width)
    raise ValueError(f"cannot format {value!r} in {width} chars")


def write_edf(samples: np.ndarray, rate: float, channels, start_epoch: float = 0.0,
              phys_range=None, record_seconds: float = 1.0,
              patient: str = "X", recording: str = "X") -> bytes:
    """Serialize physical samples to EDF bytes, quantizing to int16.

    Used by tests and the demo pipeline to fabricate inputs. phys_range is
    (lo, hi) applied to every channel, or a per-channel list; defaults to a
    symmetric range covering the data.
    """
    samples = np.asarray(samples, dtype=np.float64)
    C, N = samples.shape
    if len(channels) != C:
        raise DataError(f"{len(channels)} labels for {C} channels")
    spr = int(round(rate * record_seconds))
    if spr <= 0 or abs(spr - rate * record_seconds) > 1e-9:
        raise DataError(f"rate {rate} x record {record_seconds}s is not a whole "
                         f"sample count")
    if N % spr:
        raise DataError(f"{N} samples is not a whole number of {spr}-sample records")
    n_records = N // spr
    if phys_range is None:
        span = max(1e-6, float(np.abs(samples).max()) * 1.001)
        phys_range = [(-span, span)] * C
    elif isinstance(phys_range[0], (int, float)):
        phys_range = [tuple(phys_range)] * C
    dig_min, dig_max = -32768, 32767

    dt = datetime.fromtimestamp(start_epoch, tz=timezone.utc)
    head = b"".join([
        _field("0", 8, "version"),
        _field(patient, 80, "patient"),
        _field(recording, 80, "recording"),
        _field(dt.strftime("%d.%m.%y"), 8, "startdate"),
        _field(dt.strftime("%H.%M.%S"), 8, "starttime"),
        _num_field(256 + 256 * C, 8),
        _field("", 44, "reserved"),
        _num_field(n_records, 8),
        _num_field(record_seconds, 8),
        _num_field(C, 4),
    ])
    cols = []
    cols.append(b"".join(_field(l, 16, "label") for l in channels))
    cols.append(b"".join(_field("sim", 80, "transducer") for _ in range(C)))
    cols.append(b"".join(_field("uV", 8, "unit") for _ in range(C)))
    cols.append(b"".join(_num_field(phys_range[i][0], 8) for i in range(C)))
    cols.append(b"".join(_num_field(phys_range[i][1], 8) for i in range(C)))
    cols.append(b"".join(_num_field(dig_min, 8) for _ in range(C)))
    cols.append(b"".join(_num_field(dig_max, 8) for _ in range(C)))
    cols.append(b"".join(_field("", 80, "prefilter") for _ in range(C)))
    cols.append(b"".join(_num_field(spr, 8) for _ in range(C)))
    cols.append(b"".join(_field("", 32, "reserved2") for _ in range(C)))

    dig = np.empty((C, N), dtype="<i2")
    for i in range(C):
        lo, hi = phys_range[i]
        if not lo < hi:
            raise DataError(f"channel {i}: physical range [{lo}, {hi}] is empty")
        scalefac = (hi - lo) / (dig_max - dig_min)
        q = np.round((samples[i] - lo) / scalefac + dig_min)
        dig[i] = np.clip(q, dig_min, dig_max).astype("<i2")
    # interleave per record
    data = dig.reshape(C, n_records, spr).transpose(1, 0, 2).tobytes()
    return head + b"".join(cols) + data
