"""
Systematic random-linear fountain code over GF(256).

Repair symbol ``esi`` of block ``block_id`` is the GF(256) combination of the
block's source symbols with a coefficient row drawn from numpy's PCG64
generator seeded through ``SeedSequence([0x44E5, block_id, esi])``. The raw
64-bit outputs are read little-endian, byte by byte, so the rows (and hence
payloads) are identical on every machine and numpy release.
"""
import math
import struct
import itertools
from enum import Enum
from fractions import Fraction
from functools import cached_property
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from . import gf256

COEFFICIENT_DOMAIN = 0x44E5
VIRTUAL_BLOCK_OFFSET = 1 << 24
WIRE_HEADER = struct.Struct('>II')


class CodecError(ValueError):
    pass


class DecodeStatus(Enum):
    DECODABLE = 'decodable'
    NEED_MORE = 'need_more'


@dataclass(frozen=True)
class SourceBlock:
    """One file segment: K source symbols of ``symbol_size`` bytes."""
    block_id: int
    symbol_size: int
    symbols: tuple
    length: int

    def __post_init__(self):
        if not self.symbols:
            raise CodecError("a source block needs at least one symbol")
        for sym in self.symbols:
            if len(sym) != self.symbol_size:
                raise CodecError(
                    f"block {self.block_id}: symbol of {len(sym)} bytes, expected {self.symbol_size}"
                )

    @property
    def K(self) -> int:
        return len(self.symbols)

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.frombuffer(b''.join(self.symbols), dtype=np.uint8).reshape(self.K, self.symbol_size)

    def data(self) -> bytes:
        return b''.join(self.symbols)[:self.length]


@dataclass(frozen=True)
class CodedSymbol:
    """One encoding symbol.

    ``support`` is set on on-demand repair symbols: the source columns of the
    virtual block they were coded over (padding first, then missing).
    ``payload`` is None in symbolic simulation.
    """
    block_id: int
    esi: int
    payload: Optional[bytes]
    is_systematic: bool
    support: Optional[tuple] = None

    def to_wire(self) -> bytes:
        return WIRE_HEADER.pack(self.block_id, self.esi) + (self.payload or b'')

    @staticmethod
    def from_wire(data: bytes, k: int) -> 'CodedSymbol':
        block_id, esi = WIRE_HEADER.unpack_from(data)
        return CodedSymbol(block_id, esi, bytes(data[WIRE_HEADER.size:]), esi < k)

    @staticmethod
    def wire_size(symbol_size: int) -> int:
        return WIRE_HEADER.size + symbol_size


def coefficient_row(block_id: int, esi: int, k: int) -> np.ndarray:
    """Coefficient row of encoding symbol ``esi`` over a block of ``k`` symbols."""
    if esi < k:
        row = np.zeros(k, dtype=np.uint8)
        row[esi] = 1
        return row
    bitgen = np.random.PCG64(np.random.SeedSequence([COEFFICIENT_DOMAIN, block_id, esi]))
    raw = bitgen.random_raw((k + 7) // 8)
    row = np.asarray(raw, dtype='<u8').view(np.uint8)[:k].copy()
    if not row.any():
        # an all-zero row carries no information
        row[esi % k] = 1
    return row


def symbol_row(sym: 'CodedSymbol', k: int) -> np.ndarray:
    """Coefficient row of ``sym`` over the ``k`` columns of its source block."""
    if sym.support is None:
        return coefficient_row(sym.block_id, sym.esi, k)
    row = np.zeros(k, dtype=np.uint8)
    row[list(sym.support)] = coefficient_row(VIRTUAL_BLOCK_OFFSET + sym.block_id, sym.esi, len(sym.support))
    return row


def encode_on_support(block: 'SourceBlock', support: Sequence[int], esi: int,
                      with_payload: bool = True) -> 'CodedSymbol':
    """Repair symbol ``esi`` of the virtual block made of ``block``'s ``support`` columns."""
    support = tuple(int(i) for i in support)
    if not support or esi < len(support):
        raise CodecError("on-demand repair needs a non-empty support and esi >= its size")
    sym = CodedSymbol(block.block_id, esi, None, False, support)
    if with_payload:
        payload = gf256.combine(symbol_row(sym, block.K)[list(support)], block.matrix[list(support)])
        sym = CodedSymbol(block.block_id, esi, payload.tobytes(), False, support)
    return sym


def segment(data: bytes, symbol_size: int, max_K: int, first_block_id: int = 0) -> list:
    """Split ``data`` into source blocks of at most ``max_K`` symbols."""
    if symbol_size <= 0 or max_K < 1:
        raise CodecError("symbol_size must be > 0 and max_K >= 1")
    if not data:
        return [SourceBlock(first_block_id, symbol_size, (bytes(symbol_size),), 0)]

    block_bytes = symbol_size * max_K
    blocks = []
    for block_id, offset in enumerate(range(0, len(data), block_bytes), start=first_block_id):
        chunk = data[offset:offset + block_bytes]
        k = math.ceil(len(chunk) / symbol_size)
        padded = chunk.ljust(k * symbol_size, b'\x00')
        symbols = tuple(padded[i * symbol_size:(i + 1) * symbol_size] for i in range(k))
        blocks.append(SourceBlock(block_id, symbol_size, symbols, len(chunk)))
    return blocks


def encode_symbol(block: SourceBlock, esi: int, with_payload: bool = True) -> CodedSymbol:
    if esi < block.K:
        return CodedSymbol(block.block_id, esi, block.symbols[esi] if with_payload else None, True)
    if not with_payload:
        return CodedSymbol(block.block_id, esi, None, False)
    row = coefficient_row(block.block_id, esi, block.K)
    payload = gf256.combine(row, block.matrix).tobytes()
    return CodedSymbol(block.block_id, esi, payload, False)


def encode_systematic(block: SourceBlock, n_total: int) -> list:
    if n_total < block.K:
        raise CodecError("rate below unity")
    return [encode_symbol(block, esi) for esi in range(n_total)]


def repair_stream(block: SourceBlock, start_esi: int) -> Iterator[CodedSymbol]:
    """Unbounded repair symbols esi = start_esi, start_esi + 1, ..."""
    if start_esi < block.K:
        raise CodecError(f"repair esi must be >= K ({block.K}), got {start_esi}")
    return (encode_symbol(block, esi) for esi in itertools.count(start_esi))


def fixed_rate_symbol_count(k: int, ratio) -> int:
    ratio = Fraction(ratio).limit_denominator(10 ** 6)
    if ratio < 1:
        raise CodecError("fixed-rate ratio must be >= 1")
    return math.ceil(ratio * k)


def fixed_rate_encode(block: SourceBlock, ratio) -> list:
    return encode_systematic(block, fixed_rate_symbol_count(block.K, ratio))


class DecoderState:
    """Incremental Gauss-Jordan decoder.

    Pivot rows are stored at the index of their pivot column and kept in
    reduced row echelon form, so the block is recovered the moment the rank
    reaches K. With ``track_payload=False`` only the coefficient matrix is
    maintained (rank bookkeeping for symbolic simulation).
    """

    def __init__(self, block_id: int, K: int, symbol_size: int = 0,
                 track_payload: bool = True, length: Optional[int] = None):
        if K < 1:
            raise CodecError("K must be >= 1")
        self.block_id = block_id
        self.K = K
        self.symbol_size = symbol_size
        self.track_payload = track_payload
        self.length = K * symbol_size if length is None else length
        self.received = set()
        self.rank = 0
        self.row_ops = 0
        self._pivot = np.zeros(K, dtype=bool)
        self._unit = np.zeros(K, dtype=bool)
        self._coef = np.zeros((K, K), dtype=np.uint8)
        self._data = np.zeros((K, symbol_size), dtype=np.uint8) if track_payload else None

    @property
    def decodable(self) -> bool:
        return self.rank == self.K

    def _status(self) -> DecodeStatus:
        return DecodeStatus.DECODABLE if self.decodable else DecodeStatus.NEED_MORE

    def push(self, sym: CodedSymbol) -> DecodeStatus:
        if sym.block_id != self.block_id:
            raise CodecError(f"symbol of block {sym.block_id} pushed to decoder of block {self.block_id}")
        if self.track_payload and (sym.payload is None or len(sym.payload) != self.symbol_size):
            raise CodecError(
                f"symbol size mismatch: expected {self.symbol_size} bytes"
            )
        key = sym.esi if sym.support is None else (sym.esi, sym.support)
        if key in self.received or self.decodable:
            self.received.add(key)
            return self._status()
        self.received.add(key)

        row = symbol_row(sym, self.K)
        payload = np.frombuffer(sym.payload, dtype=np.uint8).copy() if self.track_payload else None

        multipliers = np.where(self._pivot, row, 0).astype(np.uint8)
        used = np.nonzero(multipliers)[0]
        if used.size:
            if self.track_payload:
                payload ^= gf256.combine(multipliers[used], self._data[used])
                self.row_ops += int(used.size)
            # unit pivot rows only cancel their own column
            dense = used[~self._unit[used]]
            row[used[self._unit[used]]] = 0
            if dense.size:
                row ^= gf256.combine(multipliers[dense], self._coef[dense])

        nonzero = np.nonzero(row)[0]
        if nonzero.size == 0:
            return self._status()

        col = int(nonzero[0])
        factor = gf256.INV[row[col]]
        if factor != 1:
            row = gf256.scale(row, factor)
            if self.track_payload:
                payload = gf256.scale(payload, factor)
                self.row_ops += 1

        others = np.nonzero(self._pivot & (self._coef[:, col] != 0))[0]
        if others.size:
            f = self._coef[others, col]
            self._coef[others] ^= gf256.MUL[f[:, None], row[None, :]]
            self._unit[others] = False
            if self.track_payload:
                self._data[others] ^= gf256.MUL[f[:, None], payload[None, :]]
                self.row_ops += int(others.size)

        self._unit[col] = np.count_nonzero(row) == 1
        self._coef[col] = row
        if self.track_payload:
            self._data[col] = payload
        self._pivot[col] = True
        self.rank += 1
        return self._status()

    def recovered_symbols(self) -> list:
        if not self.decodable:
            raise CodecError(f"block {self.block_id} not decodable yet (rank {self.rank}/{self.K})")
        if not self.track_payload:
            raise CodecError("decoder does not track payloads")
        return [self._data[i].tobytes() for i in range(self.K)]

    def recovered_block(self) -> SourceBlock:
        return SourceBlock(self.block_id, self.symbol_size, tuple(self.recovered_symbols()), self.length)


def decode_push(state: DecoderState, sym: CodedSymbol) -> DecodeStatus:
    return state.push(sym)


def od_fc_encode(missing: Sequence[bytes], padding: Sequence[bytes], n_repair: int,
                 block_id: int = 0) -> list:
    """Repair symbols over the virtual block ``padding + missing``.

    Padding symbols occupy esi 0..len(padding)-1 and the missing ones follow,
    so the receiver can preload what it already holds as systematic symbols.
    """
    if not missing:
        raise CodecError("on-demand coding needs at least one missing symbol")
    if n_repair <= 0:
        return []
    symbols = tuple(padding) + tuple(missing)
    virtual = SourceBlock(block_id, len(symbols[0]), symbols, len(symbols) * len(symbols[0]))
    return [encode_symbol(virtual, esi) for esi in range(virtual.K, virtual.K + n_repair)]


def od_fc_decoder(padding: Sequence[bytes], n_missing: int, symbol_size: int,
                  block_id: int = 0) -> DecoderState:
    """Receiver side of on-demand coding, preloaded with the padding symbols."""
    k = len(padding) + n_missing
    state = DecoderState(block_id, k, symbol_size)
    for esi, sym in enumerate(padding):
        state.push(CodedSymbol(block_id, esi, bytes(sym), True))
    return state
