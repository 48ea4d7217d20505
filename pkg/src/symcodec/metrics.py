"""Payload accounting, reliability formulas and end-to-end transmission trials."""

from __future__ import annotations

import csv
import enum
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelConfig, LinkStats, send_stream
from .dof_codec import METADATA_BYTES as DOF_METADATA_BYTES
from .dof_codec import decode_stream, encode_dof, encode_full, synth
from .errors import FormatError, InvariantError
from .prune_codec import METADATA_BYTES as COO_METADATA_BYTES
from .quant import packed_size
from .prune_codec import CooPayload, prune_topk, pruned_equivalent_budget, reconstruct_coo_counted
from .symmetry import OrbitMap, SymmetryKind, dof_count, orbit_map, project
from .tensor_core import ModelBundle, WeightTensor


class Codec(enum.Enum):
    DOF = "dof"
    FULL = "full"
    PRUNED = "pruned"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "Codec":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvariantError(
                f"unknown codec {name!r}; expected one of: dof, full, pruned"
            ) from None


def bandwidth_saving(kind: SymmetryKind, k: int) -> float:
    """Percent of payload saved by sending one coefficient per orbit."""
    return 100.0 * (1.0 - dof_count(kind, k) / (k * k))


def full_payload_bits(shape: tuple[int, int, int], bits: int) -> int:
    c_out, c_in, k = shape
    return bits * c_out * c_in * k * k


def dof_payload_bits(kind: SymmetryKind, shape: tuple[int, int, int], bits: int) -> int:
    c_out, c_in, k = shape
    return bits * c_out * c_in * dof_count(kind, k)


def pruned_payload_bits(kind: SymmetryKind, shape: tuple[int, int, int], bits: int, index_bits: int = 32) -> int:
    return pruned_equivalent_budget(kind, shape) * (index_bits + bits)


def clean_probability(p_succ: float, n_packets: int) -> float:
    return p_succ ** n_packets


def clean_layer_probability(payload_bits: int, cfg: ChannelConfig) -> float:
    """Probability that every packet of a ``payload_bits`` stream is delivered intact."""
    if payload_bits <= 0:
        raise InvariantError("payload_bits must be positive")
    n = cfg.packets_for(math.ceil(payload_bits / 8))
    return clean_probability(cfg.packet_success, n)


def layer_stream_bytes(
    codec: Codec, kind: SymmetryKind, shape: tuple[int, int, int], bits: int,
    metadata_bytes: int | None = None,
) -> int:
    """Serialized size of one layer; ``metadata_bytes`` overrides the header size."""
    if codec is Codec.PRUNED:
        body = pruned_equivalent_budget(kind, shape) * (4 + (bits + 7) // 8)
        meta = COO_METADATA_BYTES
    else:
        c_out, c_in, k = shape
        sent = kind if codec is Codec.DOF else SymmetryKind.NONE
        body = packed_size(c_out * c_in * dof_count(sent, k), bits)
        meta = DOF_METADATA_BYTES
    return body + (meta if metadata_bytes is None else metadata_bytes)


def bits_sent_estimate(
    shapes, codec: Codec | str, kind: SymmetryKind | str, bits: int, cfg: ChannelConfig,
    metadata_bytes: int | None = None,
) -> int:
    """Channel bits for a model, each layer packetized separately."""
    codec = Codec.parse(codec) if isinstance(codec, str) else codec
    kind = SymmetryKind.from_label(kind) if isinstance(kind, str) else kind
    packets = sum(
        cfg.packets_for(layer_stream_bytes(codec, kind, tuple(shape), bits, metadata_bytes))
        for shape in shapes
    )
    return packets * cfg.packet_bits


def simulate_clean_frequency(payload_bytes: int, cfg: ChannelConfig, trials: int) -> float:
    """Monte-Carlo fraction of trials in which a layer arrives with no bad packets."""
    payload = bytes(payload_bytes)
    clean = 0
    for t in range(trials):
        _, stats = send_stream(payload, cfg, stream_id=t)
        clean += stats.clean
    return clean / trials


def orbit_variance_ratio(omap: OrbitMap) -> float:
    """Expected (representative error) / (raw tensor error) under iid noise: sum(1/n_m) / K^2."""
    return sum(1.0 / n for n in omap.orbit_sizes) / omap.k ** 2


def projected_variance_ratio(omap: OrbitMap) -> float:
    """Expected projected-tensor error over raw error: rank of the projector / K^2."""
    return omap.m / omap.k ** 2


def noise_projection_trials(
    omap: OrbitMap, sigma: float, trials: int, seed: int = 0, channels: int = 1
) -> dict[str, np.ndarray]:
    """Per-trial squared errors for symmetric truth plus iid Gaussian noise.

    Returns arrays ``raw`` (||noisy - truth||^2), ``projected``
    (||P(noisy) - truth||^2) and ``representative`` (squared error of the
    orbit representatives, summed over orbits).
    """
    rng = np.random.default_rng(seed)
    kk = omap.k * omap.k
    truth = omap.populate(rng.normal(size=(channels, omap.m)))
    noise = rng.normal(0.0, sigma, size=(trials, channels, kk))
    noisy = truth + noise
    proj = omap.populate(omap.extract(noisy))
    rep_err = omap.extract(noisy) - omap.extract(truth)
    return {
        "raw": np.sum(noise ** 2, axis=(1, 2)),
        "projected": np.sum((proj - truth) ** 2, axis=(1, 2)),
        "representative": np.sum(rep_err ** 2, axis=(1, 2)),
    }


@dataclass
class TransmissionReport:
    codec: Codec
    symmetry: SymmetryKind
    bits: int
    snr_db: float
    seed: int
    payload_bits: int
    payload_bits_full: int
    bits_sent: int
    link: LinkStats
    frob_error_rx: float
    frob_error_rx_projected: float
    clean_layer_prob_analytic: float
    trials: int = 1
    layers_undecodable: int = 0
    coo_entries_dropped: int = 0

    @property
    def payload_reduction(self) -> float:
        return 100.0 * (1.0 - self.payload_bits / self.payload_bits_full)

    def row(self) -> dict:
        return {
            "codec": str(self.codec),
            "symmetry": self.symmetry.label,
            "bits": self.bits,
            "snr_db": _fmt(self.snr_db),
            "seed": self.seed,
            "payload_kbits": _fmt(self.payload_bits / 1000),
            "reduction_pct": f"{self.payload_reduction:.2f}",
            "bits_sent_kbits": _fmt(self.bits_sent / 1000),
            "per": _fmt(self.link.per),
            "delivered_frac": _fmt(self.link.delivered_fraction),
            "frob_rx": _fmt(self.frob_error_rx),
            "frob_rx_proj": _fmt(self.frob_error_rx_projected),
            "clean_prob": _fmt(self.clean_layer_prob_analytic),
        }

    def summary(self) -> str:
        lines = [
            f"codec            {self.codec}",
            f"symmetry         {self.symmetry.label}",
            f"bits             {self.bits}",
            f"snr_db           {self.snr_db:g}",
            f"payload          {self.payload_bits / 1000:.1f} kbits "
            f"({self.payload_reduction:.2f}% vs full)",
            f"bits sent        {self.bits_sent / 1000:.1f} kbits "
            f"({self.link.packets_sent} packets)",
            f"PER              {self.link.per:.6f}",
            f"delivered frac   {self.link.delivered_fraction:.6f}",
            f"frob error rx    {self.frob_error_rx:.6g}",
            f"frob error proj  {self.frob_error_rx_projected:.6g}",
            f"P(all clean)     {self.clean_layer_prob_analytic:.6g}",
        ]
        if self.layers_undecodable:
            lines.append(f"undecodable      {self.layers_undecodable} layer(s)")
        if self.coo_entries_dropped:
            lines.append(f"coo dropped      {self.coo_entries_dropped} entries")
        return "\n".join(lines)


def _fmt(x: float) -> str:
    return format(x, ".10g")


def _encode_layer(codec: Codec, w: WeightTensor, kind: SymmetryKind, bits: int, omap: OrbitMap):
    """Returns (stream bytes, metadata length, payload bits, ground truth)."""
    if codec is Codec.DOF:
        payload = encode_dof(w, kind, bits)
        return payload.to_bytes(), DOF_METADATA_BYTES, payload.payload_bits, project(w, omap)
    if codec is Codec.FULL:
        truth = project(w, omap)
        payload = encode_full(truth, bits)
        return payload.to_bytes(), DOF_METADATA_BYTES, payload.payload_bits, truth
    budget = pruned_equivalent_budget(kind, (w.c_out, w.c_in, w.k))
    coo = prune_topk(w.data.ravel(), budget, bits)
    return coo.to_bytes(), COO_METADATA_BYTES, coo.payload_bits, w


def _decode_layer(codec: Codec, data: bytes, kind: SymmetryKind, bits: int, w: WeightTensor, omap: OrbitMap):
    """Returns (plain reconstruction, projected reconstruction, dropped COO entries).

    Raises FormatError when the received metadata is unusable.
    """
    shape = (w.c_out, w.c_in, w.k)
    if codec is Codec.PRUNED:
        coo = CooPayload.from_bytes(data)
        budget = pruned_equivalent_budget(kind, shape)
        if coo.bits != bits or coo.total_len != w.size or coo.k_budget != budget:
            raise FormatError("COO metadata mismatch")
        dense, dropped = reconstruct_coo_counted(coo)
        rx = WeightTensor(dense.reshape(w.shape).astype(np.float32))
        return rx, rx, dropped
    sent_kind = kind if codec is Codec.DOF else SymmetryKind.NONE
    rx = synth(decode_stream(data, sent_kind, bits, shape))
    return rx, project(rx, omap), 0


def run_trial(
    bundle: ModelBundle,
    codec: Codec | str,
    kind: SymmetryKind | str,
    bits: int,
    cfg: ChannelConfig,
    stream_id: int = 0,
) -> TransmissionReport:
    """Encode, transmit, reassemble and decode every layer of ``bundle`` once.

    Errors are measured against the transmitter's projected weights for the
    dof and full codecs, and against the raw weights for the pruned baseline
    (which prunes the unconstrained model). Layers whose metadata does not
    survive are reconstructed as zeros.
    """
    codec = Codec.parse(codec) if isinstance(codec, str) else codec
    kind = SymmetryKind.from_label(kind) if isinstance(kind, str) else kind
    link = LinkStats()
    payload_bits = full_bits = 0
    err_rx = err_proj = 0.0
    undecodable = dropped = 0
    for lid, w in bundle:
        omap = orbit_map(kind, w.k)
        stream, meta, pbits, truth = _encode_layer(codec, w, kind, bits, omap)
        payload_bits += pbits
        full_bits += bits * w.size
        rx_bytes, stats = send_stream(stream, cfg, stream_id, lid, meta)
        link = link + stats
        try:
            rx, rx_proj, n_drop = _decode_layer(codec, rx_bytes, kind, bits, w, omap)
        except FormatError:
            undecodable += 1
            rx = rx_proj = WeightTensor.zeros(w.c_out, w.c_in, w.k)
            n_drop = 0
        dropped += n_drop
        ref = truth.data.astype(np.float64)
        err_rx += float(np.sum((rx.data - ref) ** 2))
        err_proj += float(np.sum((rx_proj.data - ref) ** 2))
    n_packets = link.packets_sent
    return TransmissionReport(
        codec=codec,
        symmetry=kind,
        bits=bits,
        snr_db=cfg.snr_db,
        seed=cfg.seed,
        payload_bits=payload_bits,
        payload_bits_full=full_bits,
        bits_sent=link.bits_sent,
        link=link,
        frob_error_rx=math.sqrt(err_rx),
        frob_error_rx_projected=math.sqrt(err_proj),
        clean_layer_prob_analytic=clean_probability(cfg.packet_success, n_packets),
        layers_undecodable=undecodable,
        coo_entries_dropped=dropped,
    )


CSV_COLUMNS = (
    "codec", "symmetry", "bits", "snr_db", "seed", "payload_kbits", "reduction_pct",
    "bits_sent_kbits", "per", "delivered_frac", "frob_rx", "frob_rx_proj", "clean_prob",
)
SE_COLUMNS = ("per_se", "delivered_frac_se", "frob_rx_se", "frob_rx_proj_se")
SWEEP_COLUMNS = CSV_COLUMNS + ("runs",) + SE_COLUMNS


@dataclass
class SweepGrid:
    codecs: list = field(default_factory=lambda: [Codec.DOF])
    symmetries: list = field(default_factory=lambda: list(SymmetryKind))
    snr_db: list = field(default_factory=lambda: [10.0])
    bits: list = field(default_factory=lambda: [8])
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        self.codecs = [Codec.parse(c) if isinstance(c, str) else c for c in self.codecs]
        self.symmetries = [
            SymmetryKind.from_label(s) if isinstance(s, str) else s for s in self.symmetries
        ]
        for name in ("codecs", "symmetries", "snr_db", "bits", "seeds"):
            if not getattr(self, name):
                raise InvariantError(f"sweep list {name!r} is empty")

    def cells(self):
        return itertools.product(self.codecs, self.symmetries, self.snr_db, self.bits)


def _standard_error(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float("nan")
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


def _run_cell(args):
    bundle, codec, kind, snr, bits, seeds, base = args
    reports = [
        run_trial(bundle, codec, kind, bits, replace(base, snr_db=snr, seed=seed))
        for seed in seeds
    ]
    return aggregate_reports(reports)


def aggregate_reports(reports: list[TransmissionReport]) -> dict:
    """One CSV row: means over runs plus standard errors (sample std / sqrt(runs))."""
    first = reports[0]
    metrics = {
        "per": [r.link.per for r in reports],
        "delivered_frac": [r.link.delivered_fraction for r in reports],
        "frob_rx": [r.frob_error_rx for r in reports],
        "frob_rx_proj": [r.frob_error_rx_projected for r in reports],
    }
    row = first.row()
    row["seed"] = ";".join(str(r.seed) for r in reports)
    row["bits_sent_kbits"] = _fmt(float(np.mean([r.bits_sent for r in reports])) / 1000)
    for key, vals in metrics.items():
        row[key] = _fmt(float(np.mean(vals)))
        row[f"{key}_se"] = _fmt(_standard_error(vals))
    row["runs"] = len(reports)
    return row


def run_sweep(
    bundle: ModelBundle,
    grid: SweepGrid,
    base: ChannelConfig | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Rows in grid order (codec, symmetry, snr_db, bits), one per cell."""
    base = base or ChannelConfig()
    tasks = [
        (bundle, codec, kind, snr, bits, list(grid.seeds), base)
        for codec, kind, snr, bits in grid.cells()
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, tasks))
    return [_run_cell(t) for t in tasks]


def rows_to_csv(rows: list[dict], columns=SWEEP_COLUMNS) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()
