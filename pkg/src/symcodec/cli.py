"""Command-line interface: orbits, encode, decode, transmit, sweep, make-bundle."""

from __future__ import annotations

import argparse
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .channel import DEFAULT_PACKET_BITS, ChannelConfig
from .dof_codec import DofPayload, decode_dof, encode_dof, encode_full
from .errors import FormatError, InvariantError, IoError, ShapeError
from .metrics import (
    Codec,
    SweepGrid,
    bandwidth_saving,
    rows_to_csv,
    run_sweep,
    run_trial,
    CSV_COLUMNS,
)
from .prune_codec import CooPayload, prune_topk, pruned_equivalent_budget, reconstruct_coo
from .symmetry import LABELS, SymmetryKind, orbit_map, project
from .tensor_core import (
    REFERENCE_SHAPES,
    ModelBundle,
    WeightTensor,
    load_bundle,
    save_bundle,
    synthetic_bundle,
)

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_IO = 0, 2, 3, 4

ENC_MAGIC = b"SYME"
ENC_VERSION = 1
_ENC_HEADER = struct.Struct("<4sHBI")
_ENC_LAYER = struct.Struct("<HIIHBI")

_B36 = "0123456789abcdefghijklmnopqrstuvwxyz"


def render_orbits(kind: SymmetryKind, k: int) -> str:
    """K x K grid of base-36 orbit ids; the central-skew centre shows as '×'."""
    omap = orbit_map(kind, k)
    width = 1 if omap.m <= 36 else len(str(omap.m - 1))
    lines = []
    for i in range(k):
        cells = []
        for j in range(k):
            oid = int(omap.orbit_id[i, j])
            if oid < 0:
                cells.append("×".rjust(width))
            elif omap.m <= 36:
                cells.append(_B36[oid])
            else:
                cells.append(str(oid).rjust(width))
        lines.append(" ".join(cells))
    lines.append(f"M = {omap.m}")
    lines.append(f"saving = {bandwidth_saving(kind, k):.2f}%")
    return "\n".join(lines)


# -- encoded bundle container -------------------------------------------------


def encode_bundle(bundle: ModelBundle, codec: Codec, kind: SymmetryKind, bits: int) -> bytes:
    parts = [_ENC_HEADER.pack(ENC_MAGIC, ENC_VERSION, list(Codec).index(codec), len(bundle))]
    for lid, w in bundle:
        if codec is Codec.DOF:
            stream = encode_dof(w, kind, bits).to_bytes()
        elif codec is Codec.FULL:
            stream = encode_full(project(w, orbit_map(kind, w.k)), bits).to_bytes()
        else:
            budget = pruned_equivalent_budget(kind, (w.c_out, w.c_in, w.k))
            stream = prune_topk(w.data.ravel(), budget, bits).to_bytes()
        parts.append(_ENC_LAYER.pack(lid, w.c_out, w.c_in, w.k, kind.id, len(stream)))
        parts.append(stream)
    return b"".join(parts)


def decode_bundle(buf: bytes, apply_projection: bool = True) -> ModelBundle:
    if len(buf) < _ENC_HEADER.size:
        raise FormatError("truncated encoded-bundle header")
    magic, version, codec_id, count = _ENC_HEADER.unpack_from(buf, 0)
    if magic != ENC_MAGIC or version != ENC_VERSION:
        raise FormatError(f"not an encoded bundle (magic {magic!r}, version {version})")
    if codec_id >= len(Codec):
        raise FormatError(f"unknown codec id {codec_id}")
    codec = list(Codec)[codec_id]
    off = _ENC_HEADER.size
    layers = []
    for _ in range(count):
        if off + _ENC_LAYER.size > len(buf):
            raise FormatError("truncated layer record")
        lid, c_out, c_in, k, sym_id, n = _ENC_LAYER.unpack_from(buf, off)
        off += _ENC_LAYER.size
        stream = buf[off:off + n]
        if len(stream) != n:
            raise FormatError("truncated layer stream")
        off += n
        try:
            kind = SymmetryKind.from_id(sym_id)
        except InvariantError as exc:
            raise FormatError(str(exc)) from exc
        if codec is Codec.PRUNED:
            dense = reconstruct_coo(CooPayload.from_bytes(stream))
            if dense.size != c_out * c_in * k * k:
                raise FormatError(f"layer {lid}: COO length does not match shape")
            w = WeightTensor.from_flat(c_out, c_in, k, dense)
        else:
            payload = DofPayload.from_bytes(stream)
            w = decode_dof(payload, apply_projection=False)
            if apply_projection:
                w = project(w, orbit_map(kind, k))
        layers.append((lid, w))
    return ModelBundle(tuple(layers))


# -- sweep config ---------------------------------------------------------------


@dataclass
class SweepConfig:
    bundle_path: str | None = None
    codecs: list = field(default_factory=lambda: ["dof"])
    symmetries: list = field(default_factory=lambda: list(LABELS))
    snr_db_list: list = field(default_factory=lambda: [10.0])
    bits_list: list = field(default_factory=lambda: [8])
    seeds: list = field(default_factory=lambda: [0])
    packet_bits: int = DEFAULT_PACKET_BITS
    p_loss: float = 0.0
    pin_metadata: bool = False
    output_path: str | None = None

    def grid(self) -> SweepGrid:
        return SweepGrid(self.codecs, self.symmetries, self.snr_db_list, self.bits_list, self.seeds)

    def base_config(self) -> ChannelConfig:
        return ChannelConfig(packet_bits=self.packet_bits, p_loss=self.p_loss,
                             pin_metadata=self.pin_metadata)

    def load(self) -> ModelBundle:
        if self.bundle_path in (None, "", "reference"):
            return synthetic_bundle(REFERENCE_SHAPES)
        return load_bundle(self.bundle_path)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InvariantError(f"not a boolean: {text!r}")


def _parse_seeds(text: str) -> list[int]:
    seeds = []
    for item in _split(text):
        if ".." in item:
            lo, hi = item.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(item))
    return seeds


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def parse_sweep_config(text: str, base_dir: Path | None = None) -> SweepConfig:
    """Parse ``key = value`` lines; lists are comma-separated, ``#`` starts a comment."""
    cfg = SweepConfig()
    handlers = {
        "bundle": lambda v: setattr(cfg, "bundle_path", v),
        "codecs": lambda v: setattr(cfg, "codecs", _split(v)),
        "symmetries": lambda v: setattr(
            cfg, "symmetries", list(LABELS) if v.strip() == "all" else _split(v)
        ),
        "snr_db": lambda v: setattr(cfg, "snr_db_list", [float(x) for x in _split(v)]),
        "bits": lambda v: setattr(cfg, "bits_list", [int(x) for x in _split(v)]),
        "seeds": lambda v: setattr(cfg, "seeds", _parse_seeds(v)),
        "packet_bits": lambda v: setattr(cfg, "packet_bits", int(v)),
        "p_loss": lambda v: setattr(cfg, "p_loss", float(v)),
        "pin_metadata": lambda v: setattr(cfg, "pin_metadata", _parse_bool(v)),
        "output": lambda v: setattr(cfg, "output_path", v),
    }
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvariantError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in handlers:
            raise InvariantError(f"line {lineno}: unknown key {key!r}")
        try:
            handlers[key](value)
        except ValueError as exc:
            raise InvariantError(f"line {lineno}: {exc}") from exc
    if base_dir is not None:
        if cfg.bundle_path not in (None, "", "reference"):
            cfg.bundle_path = str(base_dir / cfg.bundle_path)
        if cfg.output_path:
            cfg.output_path = str(base_dir / cfg.output_path)
    for name in ("codecs", "symmetries", "snr_db_list", "bits_list", "seeds"):
        if not getattr(cfg, name):
            raise InvariantError(f"{name} must not be empty")
    return cfg


# -- commands -------------------------------------------------------------------


def _channel(args, snr_db: float = 10.0) -> ChannelConfig:
    return ChannelConfig(snr_db=snr_db, packet_bits=args.packet_bits, p_loss=args.p_loss,
                         seed=args.seed, pin_metadata=args.pin_metadata)


def cmd_orbits(args) -> int:
    print(render_orbits(SymmetryKind.from_label(args.symmetry), args.k))
    return EXIT_OK


def cmd_encode(args) -> int:
    bundle = load_bundle(args.bundle)
    blob = encode_bundle(bundle, Codec.parse(args.codec), SymmetryKind.from_label(args.symmetry), args.bits)
    _write(args.output, blob)
    print(f"wrote {len(blob)} bytes to {args.output}")
    return EXIT_OK


def cmd_decode(args) -> int:
    try:
        blob = Path(args.encoded).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {args.encoded}: {exc}") from exc
    bundle = decode_bundle(blob, apply_projection=not args.no_projection)
    save_bundle(bundle, args.output)
    print(f"decoded {len(bundle)} layer(s) to {args.output}")
    return EXIT_OK


def cmd_transmit(args) -> int:
    bundle = load_bundle(args.bundle) if args.bundle else synthetic_bundle(REFERENCE_SHAPES)
    report = run_trial(bundle, args.codec, args.symmetry, args.bits, _channel(args, args.snr_db))
    print(report.summary())
    if args.csv:
        path = Path(args.csv)
        text = rows_to_csv([report.row()], CSV_COLUMNS)
        try:
            if path.exists() and path.stat().st_size > 0:
                text = text.split("\n", 1)[1]
            with path.open("a") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    return EXIT_OK


def cmd_sweep(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    cfg = parse_sweep_config(text, base_dir=path.parent)
    # explicit command-line flags override the file
    if args.packet_bits_given:
        cfg.packet_bits = args.packet_bits
    if args.p_loss_given:
        cfg.p_loss = args.p_loss
    if args.pin_metadata:
        cfg.pin_metadata = True
    rows = run_sweep(cfg.load(), cfg.grid(), cfg.base_config(), jobs=args.jobs)
    csv_text = rows_to_csv(rows)
    out = args.output or cfg.output_path
    if out:
        _write(out, csv_text.encode())
        print(f"wrote {len(rows)} row(s) to {out}")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_make_bundle(args) -> int:
    shapes = []
    for item in _split(args.shapes):
        try:
            c_out, c_in, k = (int(x) for x in item.lower().split("x"))
        except ValueError:
            raise InvariantError(f"bad shape {item!r}; expected COUTxCINxK") from None
        shapes.append((c_out, c_in, k))
    bundle = synthetic_bundle(shapes, seed=args.seed)
    if args.symmetry:
        kind = SymmetryKind.from_label(args.symmetry)
        bundle = ModelBundle(tuple((lid, project(w, orbit_map(kind, w.k))) for lid, w in bundle))
    save_bundle(bundle, args.output)
    print(f"wrote {len(bundle)} layer(s), {bundle.num_params} weights to {args.output}")
    return EXIT_OK


def _write(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


class _Given(argparse.Action):
    """Store the value and remember that it was given explicitly."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        setattr(namespace, f"{self.dest}_given", True)


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(0), help="64-bit RNG seed (default 0)")
    parser.add_argument("--packet-bits", type=int, default=d(DEFAULT_PACKET_BITS),
                        action=_Given, help="total frame length in bits (default 2048)")
    parser.add_argument("--p-loss", type=float, default=d(0.0), action=_Given,
                        help="packet erasure probability (default 0)")
    parser.add_argument("--pin-metadata", action="store_true", default=d(False),
                        help="exempt per-layer metadata from corruption")


def build_parser() -> argparse.ArgumentParser:
    sym_help = "symmetry: " + ", ".join(LABELS)
    parser = argparse.ArgumentParser(
        prog="symcodec",
        description="Symmetry DoF codec and packetized BPSK-AWGN link simulator.",
        epilog="symmetries:\n  " + ", ".join(LABELS[:5]) + ",\n  " + ", ".join(LABELS[5:]),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _global_flags(parser, suppress=False)
    parser.set_defaults(packet_bits_given=False, p_loss_given=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("orbits", help="print the orbit partition of a k x k kernel")
    p.add_argument("symmetry", choices=LABELS, metavar="SYMMETRY", help=sym_help)
    p.add_argument("k", type=int, nargs="?", default=3, help="odd kernel side (default 3)")
    p.set_defaults(func=cmd_orbits)

    codec_opts = argparse.ArgumentParser(add_help=False)
    codec_opts.add_argument("--codec", choices=[c.value for c in Codec], default="dof")
    codec_opts.add_argument("--symmetry", choices=LABELS, default="none", metavar="SYMMETRY",
                            help=sym_help)
    codec_opts.add_argument("--bits", type=int, default=8, help="quantizer bit-width (default 8)")

    p = sub.add_parser("encode", parents=[codec_opts], help="encode a SYMW bundle")
    _global_flags(p, suppress=True)
    p.add_argument("bundle")
    p.add_argument("output")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode an encoded bundle back to SYMW")
    _global_flags(p, suppress=True)
    p.add_argument("encoded")
    p.add_argument("output")
    p.add_argument("--no-projection", action="store_true", help="skip receive-side projection")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("transmit", parents=[codec_opts], help="run one transmission trial")
    _global_flags(p, suppress=True)
    p.add_argument("--bundle", help="SYMW bundle (default: synthetic 3-layer reference model)")
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--csv", help="append the report row to this CSV file")
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("sweep", help="run a parameter sweep from a config file")
    _global_flags(p, suppress=True)
    p.add_argument("config")
    p.add_argument("--output", help="CSV path (overrides the config's output key)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("make-bundle", help="write a random synthetic SYMW bundle")
    _global_flags(p, suppress=True)
    p.add_argument("output")
    p.add_argument("--shapes", default=",".join("x".join(map(str, s)) for s in REFERENCE_SHAPES),
                   help="comma list of COUTxCINxK (default: 3-layer reference model)")
    p.add_argument("--symmetry", choices=LABELS, metavar="SYMMETRY",
                   help="project the weights onto this symmetry")
    p.set_defaults(func=cmd_make_bundle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvariantError, ShapeError) as exc:
        print(f"symcodec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"symcodec: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except IoError as exc:
        print(f"symcodec: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
