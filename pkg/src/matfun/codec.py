"""Floating-point token codecs and matrix serialization.

Values are quantized to sign/mantissa/exponent (3 significant digits,
round half away from zero) and rendered under four schemes that trade
tokens per coefficient against vocabulary size:

    P10    5 tokens  [+, 3, 1, 4, E-2]    core vocab 210
    P1000  3 tokens  [+, 314, E-2]        core vocab 1100
    B1999  2 tokens  [314, E-2]           core vocab 2000
    FP15   1 token   [FP314/-2]           core vocab 30000

Core sizes are normative; the exact arithmetic behind each total is
documented in `vocab_header_lines`. A fixed set of special tokens
(PAD/BOS/EOS/ZERO/DIM_1..DIM_10) precedes every core vocabulary, so token
ids live in [0, core_size + 14). Zero cannot carry a 3-digit mantissa and
is encoded as ZERO followed by PAD up to the scheme's per-coefficient
width, which keeps serialized matrices at a fixed stride.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CodecError,
    DimensionError,
    ExponentRangeError,
    MalformedSequenceError,
)
from .kernels import sme_quantize_batch

PAD, BOS, EOS, ZERO = 0, 1, 2, 3
MAX_DIM = 10
SPECIAL_TOKENS = ["PAD", "BOS", "EOS", "ZERO"] + [
    f"DIM_{i}" for i in range(1, MAX_DIM + 1)
]
N_SPECIAL = len(SPECIAL_TOKENS)


def dim_token(n: int) -> int:
    if not 1 <= n <= MAX_DIM:
        raise DimensionError(f"serializable dimensions are 1..{MAX_DIM}, got {n}")
    return 3 + n  # DIM_1 == 4


@dataclass(frozen=True)
class SmeTriple:
    """sign * mantissa * 10^exponent with mantissa in 100..999.

    The reserved zero triple is (0, 0, 0).
    """

    sign: int
    mantissa: int
    exponent: int

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    @property
    def value(self) -> float:
        if self.is_zero:
            return 0.0
        return float(self.sign) * float(self.mantissa) * 10.0**self.exponent


@dataclass(frozen=True)
class Scheme:
    name: str
    tokens_per_coeff: int
    vocab_size: int  # core size, excluding the shared special tokens
    exp_min: int
    exp_max: int
    extra_exponents: tuple = ()

    @property
    def total_vocab(self) -> int:
        return self.vocab_size + N_SPECIAL

    @property
    def n_exp_slots(self) -> int:
        return self.exp_max - self.exp_min + 1 + len(self.extra_exponents)

    def exp_slot(self, e: int) -> int:
        if self.exp_min <= e <= self.exp_max:
            return e - self.exp_min
        if e in self.extra_exponents:
            return (
                self.exp_max
                - self.exp_min
                + 1
                + self.extra_exponents.index(e)
            )
        raise ExponentRangeError(
            f"{self.name}: exponent {e} outside [{self.exp_min}, {self.exp_max}]"
            + (f" + {self.extra_exponents}" if self.extra_exponents else "")
        )

    def slot_exp(self, slot: int) -> int:
        contiguous = self.exp_max - self.exp_min + 1
        if 0 <= slot < contiguous:
            return self.exp_min + slot
        if contiguous <= slot < self.n_exp_slots:
            return self.extra_exponents[slot - contiguous]
        raise MalformedSequenceError(f"{self.name}: bad exponent slot {slot}")

    def check_exponent(self, e: int):
        self.exp_slot(e)


# FP15 packs one value per token, so 3-digit precision at exactly 30000 ids
# allows only 16 exponent slots; the block [-7, 7] covers the data range and
# the extra slot at 21 carries the large-magnitude showcase value.
SCHEMES = {
    "P10": Scheme("P10", 5, 210, -99, 98),
    "P1000": Scheme("P1000", 3, 1100, -99, 98),
    "B1999": Scheme("B1999", 2, 2000, -100, 99),
    "FP15": Scheme("FP15", 1, 30000, -7, 7, (21,)),
}

_FP15_CORE = 2 * 900 * 16  # packed sign x mantissa x exponent; rest reserved


def get_scheme(scheme) -> Scheme:
    if isinstance(scheme, Scheme):
        return scheme
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise CodecError(f"unknown scheme {scheme!r}; pick from {sorted(SCHEMES)}")


@dataclass
class TokenSequence:
    tokens: list
    scheme: str

    def __len__(self):
        return len(self.tokens)


def to_sme(x: float) -> SmeTriple:
    """Quantize one finite float; 0.0 maps to the reserved zero triple."""
    x = float(x)
    if not math.isfinite(x):
        raise CodecError(f"cannot encode non-finite value {x!r}")
    sign, mant, expo, is_zero = sme_quantize_batch(np.array([x]))
    if is_zero[0]:
        return SmeTriple(0, 0, 0)
    if not 100 <= int(mant[0]) <= 999:  # deep-subnormal magnitudes
        raise CodecError(f"magnitude of {x!r} is outside the quantizable range")
    return SmeTriple(int(sign[0]), int(mant[0]), int(expo[0]))


# ----------------------------------------------------------------------
# token id layout per scheme (core ids start after the specials)


def _p10_ids(t: SmeTriple, s: Scheme):
    base = N_SPECIAL
    sign_id = base + (0 if t.sign > 0 else 1)
    digits = (t.mantissa // 100, (t.mantissa // 10) % 10, t.mantissa % 10)
    digit_ids = [base + 2 + d for d in digits]
    exp_id = base + 12 + s.exp_slot(t.exponent)
    return [sign_id, *digit_ids, exp_id]


def _p1000_ids(t: SmeTriple, s: Scheme):
    base = N_SPECIAL
    sign_id = base + (0 if t.sign > 0 else 1)
    mant_id = base + 2 + (t.mantissa - 100)
    exp_id = base + 902 + s.exp_slot(t.exponent)
    return [sign_id, mant_id, exp_id]


def _b1999_ids(t: SmeTriple, s: Scheme):
    base = N_SPECIAL
    signed = t.sign * t.mantissa
    # -999..-100 occupy 0..899, 100..999 occupy 900..1799
    mant_id = base + (signed + 999 if signed < 0 else 900 + signed - 100)
    exp_id = base + 1800 + s.exp_slot(t.exponent)
    return [mant_id, exp_id]


def _fp15_id(t: SmeTriple, s: Scheme):
    sign_idx = 0 if t.sign > 0 else 1
    packed = (sign_idx * 900 + (t.mantissa - 100)) * s.n_exp_slots + s.exp_slot(
        t.exponent
    )
    return [N_SPECIAL + packed]


def encode_value(x: float, scheme) -> TokenSequence:
    """Tokenize one float; always exactly tokens_per_coeff tokens."""
    s = get_scheme(scheme)
    t = to_sme(x)
    if t.is_zero:
        return TokenSequence([ZERO] + [PAD] * (s.tokens_per_coeff - 1), s.name)
    s.check_exponent(t.exponent)
    if s.name == "P10":
        ids = _p10_ids(t, s)
    elif s.name == "P1000":
        ids = _p1000_ids(t, s)
    elif s.name == "B1999":
        ids = _b1999_ids(t, s)
    else:
        ids = _fp15_id(t, s)
    return TokenSequence(ids, s.name)


def _expect(cond: bool, msg: str):
    if not cond:
        raise MalformedSequenceError(msg)


def _decode_run(ids, s: Scheme) -> SmeTriple:
    """Parse one coefficient run of length tokens_per_coeff."""
    base = N_SPECIAL
    _expect(len(ids) == s.tokens_per_coeff, f"{s.name}: wrong run length {len(ids)}")
    if ids[0] == ZERO:
        _expect(
            all(t == PAD for t in ids[1:]), f"{s.name}: zero run must be ZERO+PAD"
        )
        return SmeTriple(0, 0, 0)
    _expect(
        all(base <= t < base + s.vocab_size for t in ids),
        f"{s.name}: token outside core vocabulary",
    )
    if s.name == "P10":
        sign_off, d = ids[0] - base, [t - base - 2 for t in ids[1:4]]
        _expect(sign_off in (0, 1), "P10: bad sign token")
        _expect(all(0 <= x <= 9 for x in d), "P10: bad digit token")
        _expect(0 <= ids[4] - base - 12 < s.n_exp_slots, "P10: bad exponent token")
        e = s.slot_exp(ids[4] - base - 12)
        m = d[0] * 100 + d[1] * 10 + d[2]
        _expect(100 <= m <= 999, "P10: mantissa out of range")
        return SmeTriple(1 if sign_off == 0 else -1, m, e)
    if s.name == "P1000":
        sign_off = ids[0] - base
        _expect(sign_off in (0, 1), "P1000: bad sign token")
        m_off = ids[1] - base - 2
        _expect(0 <= m_off < 900, "P1000: bad mantissa token")
        e_off = ids[2] - base - 902
        _expect(0 <= e_off < s.n_exp_slots, "P1000: bad exponent token")
        return SmeTriple(1 if sign_off == 0 else -1, 100 + m_off, s.slot_exp(e_off))
    if s.name == "B1999":
        m_off = ids[0] - base
        _expect(0 <= m_off < 1800, "B1999: bad mantissa token")
        signed = m_off - 999 if m_off < 900 else 100 + (m_off - 900)
        e_off = ids[1] - base - 1800
        _expect(0 <= e_off < s.n_exp_slots, "B1999: bad exponent token")
        return SmeTriple(
            -1 if signed < 0 else 1, abs(signed), s.slot_exp(e_off)
        )
    packed = ids[0] - base
    _expect(0 <= packed < _FP15_CORE, "FP15: reserved or out-of-range token")
    e_off = packed % s.n_exp_slots
    rest = packed // s.n_exp_slots
    m = 100 + rest % 900
    sign_idx = rest // 900
    return SmeTriple(1 if sign_idx == 0 else -1, m, s.slot_exp(e_off))


def decode_value(seq, scheme=None) -> float:
    """Invert `encode_value`; reconstructs sign*mantissa*10^exponent exactly."""
    if isinstance(seq, TokenSequence):
        scheme = scheme or seq.scheme
        ids = list(seq.tokens)
    else:
        ids = list(seq)
    s = get_scheme(scheme)
    return _decode_run(ids, s).value


def encode_matrix(a, scheme) -> TokenSequence:
    """[DIM_n] + row-major coefficient runs + [EOS]."""
    s = get_scheme(scheme)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    flat = a.ravel()
    if not np.isfinite(flat).all():
        raise CodecError("matrix has non-finite entries")
    sign, mant, expo, is_zero = sme_quantize_batch(flat)
    ids = [dim_token(n)]
    for k in range(flat.size):
        if is_zero[k]:
            ids.extend([ZERO] + [PAD] * (s.tokens_per_coeff - 1))
            continue
        if not 100 <= int(mant[k]) <= 999:
            raise CodecError(
                f"entry {flat[k]!r} is outside the quantizable range"
            )
        t = SmeTriple(int(sign[k]), int(mant[k]), int(expo[k]))
        s.check_exponent(t.exponent)
        if s.name == "P10":
            ids.extend(_p10_ids(t, s))
        elif s.name == "P1000":
            ids.extend(_p1000_ids(t, s))
        elif s.name == "B1999":
            ids.extend(_b1999_ids(t, s))
        else:
            ids.extend(_fp15_id(t, s))
    ids.append(EOS)
    return TokenSequence(ids, s.name)


def decode_matrix(seq, scheme=None, n: int | None = None) -> np.ndarray:
    """Invert `encode_matrix`. Any structural violation raises
    MalformedSequenceError."""
    if isinstance(seq, TokenSequence):
        scheme = scheme or seq.scheme
        ids = list(seq.tokens)
    else:
        ids = list(seq)
    s = get_scheme(scheme)
    _expect(len(ids) >= 2, "sequence too short")
    dim_id = ids[0]
    _expect(4 <= dim_id < 4 + MAX_DIM, "missing dimension token")
    n_seq = dim_id - 3
    _expect(n is None or n == n_seq, f"dimension token says {n_seq}, expected {n}")
    expected_len = 2 + n_seq * n_seq * s.tokens_per_coeff
    _expect(
        len(ids) == expected_len,
        f"{s.name}: length {len(ids)} != expected {expected_len} for n={n_seq}",
    )
    _expect(ids[-1] == EOS, "missing EOS")
    body = ids[1:-1]
    tpc = s.tokens_per_coeff
    values = [
        _decode_run(body[k * tpc : (k + 1) * tpc], s).value
        for k in range(n_seq * n_seq)
    ]
    return np.array(values).reshape(n_seq, n_seq)


# ----------------------------------------------------------------------
# vocabulary enumeration and files


def vocab(scheme) -> list:
    """Token names indexed by id: specials first, then the core vocabulary."""
    s = get_scheme(scheme)
    names = list(SPECIAL_TOKENS)
    exp_names = [f"E{s.slot_exp(i)}" for i in range(s.n_exp_slots)]
    if s.name == "P10":
        names += ["+", "-"]
        names += [str(d) for d in range(10)]
        names += exp_names
    elif s.name == "P1000":
        names += ["+", "-"]
        names += [str(m) for m in range(100, 1000)]
        names += exp_names
    elif s.name == "B1999":
        names += [str(m) for m in range(-999, -99)]
        names += [str(m) for m in range(100, 1000)]
        names += exp_names
    else:
        for sign_idx in (0, 1):
            for m in range(100, 1000):
                for slot in range(s.n_exp_slots):
                    sm = m if sign_idx == 0 else -m
                    names.append(f"FP{sm}/{s.slot_exp(slot)}")
        names += [f"FPRES_{i}" for i in range(s.vocab_size - _FP15_CORE)]
    assert len(names) == s.total_vocab
    return names


def vocab_header_lines(scheme) -> list:
    s = get_scheme(scheme)
    pieces = {
        "P10": "2 signs + 10 digits + 198 exponent tokens (E-99..E98) = 210",
        "P1000": "2 signs + 900 mantissas + 198 exponent tokens (E-99..E98) = 1100",
        "B1999": "1800 signed mantissas + 200 exponent tokens (E-100..E99) = 2000",
        "FP15": "2 signs x 900 mantissas x 16 exponent slots (-7..7 and 21) "
        "= 28800 + 1200 reserved = 30000",
    }
    return [
        f"# scheme={s.name} tokens_per_coeff={s.tokens_per_coeff}",
        f"# core_vocab={s.vocab_size} specials={N_SPECIAL} "
        f"total={s.total_vocab}",
        f"# exponent_range=[{s.exp_min},{s.exp_max}]",
        f"# core layout: {pieces[s.name]}",
        "# token id = 0-based index among the non-comment lines below",
    ]


def write_vocab_file(scheme, path):
    s = get_scheme(scheme)
    lines = vocab_header_lines(s) + vocab(s)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vocab_file(path) -> list:
    with open(path) as fh:
        return [line.rstrip("\n") for line in fh if not line.startswith("#")]


# ----------------------------------------------------------------------
# token-sequence sample files (JSON lines)


def write_sequence_file(records, path):
    """One JSON object per line: {scheme, n, input_tokens, target_tokens}."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "scheme": rec["scheme"],
                        "n": rec["n"],
                        "input_tokens": list(map(int, rec["input_tokens"])),
                        "target_tokens": list(map(int, rec["target_tokens"])),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_sequence_file(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
