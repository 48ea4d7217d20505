"""Symmetry degrees-of-freedom codec for convolution kernels over a noisy packet link."""

from .channel import ChannelConfig, LinkStats, Packet, ber_from_snr, packetize, reassemble, transmit
from .dof_codec import DofPayload, decode_dof, encode_dof, encode_full, synth
from .errors import FormatError, InvariantError, IoError, ShapeError, SymCodecError
from .metrics import Codec, TransmissionReport, bandwidth_saving, clean_layer_probability, run_sweep, run_trial
from .prune_codec import CooPayload, prune_topk, pruned_equivalent_budget, reconstruct_coo
from .quant import QuantizedVector, dequantize, pack_codes, quantize, unpack_codes
from .symmetry import OrbitMap, SymmetryKind, dof_count, orbit_map, project
from .tensor_core import ModelBundle, WeightTensor, frobenius_distance, load_bundle, save_bundle

__version__ = "0.1.0"
