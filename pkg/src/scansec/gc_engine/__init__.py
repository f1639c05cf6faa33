"""Garbling scheme (free-XOR, half-gates, point-and-permute) plus base OT."""

from .garbling import (GarbledCircuit, batch_evaluate, decode_outputs,
                       evaluate, garble, labels_from_bytes, labels_to_bytes)
from .ot import (ot_receive_finish, ot_receive_request, ot_send_response,
                 ot_transfer)

__all__ = [
    "GarbledCircuit", "garble", "evaluate", "batch_evaluate",
    "decode_outputs", "labels_to_bytes", "labels_from_bytes",
    "ot_receive_request", "ot_send_response", "ot_receive_finish",
    "ot_transfer",
]
