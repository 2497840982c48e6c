"""
Seeded comparison of whole-segment fountain recovery and on-demand recovery.

Both schemes first send every source symbol over an erasure channel. FC-MP
then streams repair symbols of the whole segment until the receiver decodes;
OD-FC encodes only the reported missing symbols padded with the most
recently received ones. Symbol operations are GF(256) row operations of one
symbol length (encoder combinations plus decoder eliminations).
"""
from dataclasses import dataclass, field

import numpy as np

from . import fountain_codec as fc
from .logs import get_logger

logger = get_logger('odfc')

OD_BLOCK_OFFSET = fc.VIRTUAL_BLOCK_OFFSET


@dataclass
class TransferResult:
    data: bytes
    symbols_sent: int = 0
    encoder_ops: int = 0
    decoder_ops: int = 0

    @property
    def symbol_ops(self) -> int:
        return self.encoder_ops + self.decoder_ops


@dataclass
class ComparisonReport:
    sessions: int
    loss_rate: float
    identical: bool
    fc_mp_ops: int
    od_fc_ops: int
    fc_mp_symbols: int
    od_fc_symbols: int
    mismatched_sessions: list = field(default_factory=list)


def _channel(rng: np.random.Generator, loss_rate: float) -> bool:
    return rng.random() >= loss_rate


def transfer_fc_mp(blocks, rng, loss_rate) -> TransferResult:
    result = TransferResult(b'')
    parts = []
    for block in blocks:
        state = fc.DecoderState(block.block_id, block.K, block.symbol_size, length=block.length)
        esi = 0
        while not state.decodable:
            sym = fc.encode_symbol(block, esi)
            result.symbols_sent += 1
            if not sym.is_systematic:
                result.encoder_ops += block.K
            if _channel(rng, loss_rate):
                state.push(sym)
            esi += 1
        result.decoder_ops += state.row_ops
        parts.append(state.recovered_block().data())
    result.data = b''.join(parts)
    return result


def transfer_od_fc(blocks, rng, loss_rate, min_virtual_k: int = 8) -> TransferResult:
    result = TransferResult(b'')
    parts = []
    for block in blocks:
        received = {}
        for esi in range(block.K):
            result.symbols_sent += 1
            if _channel(rng, loss_rate):
                received[esi] = block.symbols[esi]

        missing = [esi for esi in range(block.K) if esi not in received]
        if missing:
            n_padding = min(max(0, min_virtual_k - len(missing)), len(received))
            padding_ids = sorted(received)[len(received) - n_padding:] if n_padding else []
            padding = [received[esi] for esi in padding_ids]
            virtual_id = OD_BLOCK_OFFSET + block.block_id
            decoder = fc.od_fc_decoder(padding, len(missing), block.symbol_size, block_id=virtual_id)

            missing_symbols = [block.symbols[esi] for esi in missing]
            first_batch = fc.od_fc_encode(missing_symbols, padding, len(missing), block_id=virtual_id)

            # keep streaming over the same virtual block until it decodes
            virtual = fc.SourceBlock(virtual_id, block.symbol_size,
                                     tuple(padding) + tuple(missing_symbols),
                                     (len(padding) + len(missing)) * block.symbol_size)
            stream = fc.repair_stream(virtual, virtual.K + len(first_batch))
            pending = iter(first_batch)
            while not decoder.decodable:
                sym = next(pending, None) or next(stream)
                result.symbols_sent += 1
                result.encoder_ops += virtual.K
                if _channel(rng, loss_rate):
                    decoder.push(sym)
            result.decoder_ops += decoder.row_ops
            recovered = decoder.recovered_symbols()
            for offset, esi in enumerate(missing):
                received[esi] = recovered[len(padding) + offset]

        data = b''.join(received[esi] for esi in range(block.K))
        parts.append(data[:block.length])
    result.data = b''.join(parts)
    return result


def compare_sessions(n_sessions: int = 100, loss_rate: float = 0.05, file_size: int = 20_000,
                     symbol_size: int = 100, max_K: int = 100, seed: int = 1,
                     min_virtual_k: int = 8) -> ComparisonReport:
    """Run ``n_sessions`` seeded transfers with both schemes and compare them."""
    root = np.random.SeedSequence(seed)
    fc_ops = od_ops = fc_syms = od_syms = 0
    mismatched = []
    for session, child in enumerate(root.spawn(n_sessions)):
        data_rng, fc_rng, od_rng = (np.random.default_rng(s) for s in child.spawn(3))
        data = data_rng.integers(0, 256, size=file_size, dtype=np.uint8).tobytes()
        blocks = fc.segment(data, symbol_size, max_K)

        fc_result = transfer_fc_mp(blocks, fc_rng, loss_rate)
        od_result = transfer_od_fc(blocks, od_rng, loss_rate, min_virtual_k)
        if fc_result.data != data or od_result.data != data:
            mismatched.append(session)
        fc_ops += fc_result.symbol_ops
        od_ops += od_result.symbol_ops
        fc_syms += fc_result.symbols_sent
        od_syms += od_result.symbols_sent

    logger.debug("od-fc comparison at loss %.3f: fc-mp ops=%d od-fc ops=%d", loss_rate, fc_ops, od_ops)
    return ComparisonReport(
        sessions=n_sessions,
        loss_rate=loss_rate,
        identical=not mismatched,
        fc_mp_ops=fc_ops,
        od_fc_ops=od_ops,
        fc_mp_symbols=fc_syms,
        od_fc_symbols=od_syms,
        mismatched_sessions=mismatched,
    )
