"""Secret-shared non-interactive proof of circuit validity over Shamir shares.

The client (gradient owner) evaluates the validity circuit, interpolates
f and g through the left/right input values of the M multiplication gates
(f(t) = u_t, g(t) = v_t for t = 1..M), and Shamir-shares the coefficients
of h = f * g together with one Beaver triple. Each server evaluates the
circuit on its input share, substituting h-share evaluations for
multiplication outputs, and the group runs one polynomial identity test
at a public random point r:

    h(r) - fhat(r) * ghat(r) == 0,

with the product computed through the Beaver triple so every on-wire value
stays a degree-T Shamir share. A cheating prover whose shared h disagrees
with f * g survives with probability at most deg(h - f*g)/q over r.

One Beaver triple per proof suffices: the protocol performs exactly one
secure multiplication. Triples are prover-supplied; an ill-formed triple
only perturbs the identity test against the prover itself, and server
privacy never depends on triple well-formedness.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import field
from .circuit import ADD, CONST, INPUT, MUL, SUB, Circuit, eval_plain
from .field import Q
from .shamir import DecodeFailure, ShareVector, robust_recon_scalar, ss_share


@dataclass(frozen=True)
class ProverPackage:
    """Per-server proof material.

    h_coeff_shares[j] is this server's Shamir share of coefficient j of h
    (length 2M - 1); triple holds shares of (a, b, c = a*b).
    """

    share: ShareVector
    h_coeff_shares: tuple[int, ...]
    triple: tuple[int, int, int]

    @property
    def index(self) -> int:
        return self.share.index

    def to_bytes(self) -> bytes:
        """Wire format: input ShareVector || h coefficient shares || (a, b, c)."""
        body = self.share.to_bytes()
        body += b"".join(field.to_bytes(v) for v in self.h_coeff_shares)
        body += b"".join(field.to_bytes(v) for v in self.triple)
        return body

    @classmethod
    def from_bytes(cls, data: bytes, num_mul: int) -> "ProverPackage":
        if len(data) < 8:
            raise ValueError("prover package too short")
        share_len = int.from_bytes(data[4:8], "little")
        off = 8 + share_len * field.ELEMENT_BYTES
        share = ShareVector.from_bytes(data[:off])
        n_h = 2 * num_mul - 1
        need = off + (n_h + 3) * field.ELEMENT_BYTES
        if len(data) != need:
            raise ValueError("prover package length mismatch")
        vals = [
            field.from_bytes(data[off + i * 16 : off + (i + 1) * 16])
            for i in range(n_h + 3)
        ]
        return cls(
            share=share,
            h_coeff_shares=tuple(vals[:n_h]),
            triple=(vals[n_h], vals[n_h + 1], vals[n_h + 2]),
        )


def compute_h(circ: Circuit, inputs: list[int]) -> tuple[list[int], list[int], list[int]]:
    """Interpolate f, g through the multiplication trace and return (f, g, h).

    f and g have degree <= M-1; h = f*g has degree <= 2(M-1). h is padded
    to exactly 2M-1 coefficients.
    """
    _, trace = eval_plain(circ, inputs)
    M = len(trace)
    if M == 0:
        raise ValueError("circuit has no multiplication gates; nothing to prove")
    pts_f = [(t + 1, u) for t, u in enumerate(trace.left)]
    pts_g = [(t + 1, v) for t, v in enumerate(trace.right)]
    f = field.poly_interpolate(pts_f)
    g = field.poly_interpolate(pts_g)
    h = field.poly_mul(f, g)
    h = h + [0] * (2 * M - 1 - len(h))
    return f, g, h


def package_proof(
    input_shares: list[ShareVector],
    h_coeffs: list[int],
    T: int,
    K: int,
    rng,
) -> list[ProverPackage]:
    """Shamir-share h's coefficients and one Beaver triple across K servers."""
    if len(input_shares) != K:
        raise ValueError("need one input share per server")
    coeff_shares = [[0] * len(h_coeffs) for _ in range(K)]
    for j, hj in enumerate(h_coeffs):
        shares, _ = ss_share([hj], T, K, rng)
        for i in range(K):
            coeff_shares[i][j] = shares[i].values[0]
    a = field.rand_element(rng)
    b = field.rand_element(rng)
    c = field.mul(a, b)
    a_sh, _ = ss_share([a], T, K, rng)
    b_sh, _ = ss_share([b], T, K, rng)
    c_sh, _ = ss_share([c], T, K, rng)
    return [
        ProverPackage(
            share=input_shares[i],
            h_coeff_shares=tuple(coeff_shares[i]),
            triple=(a_sh[i].values[0], b_sh[i].values[0], c_sh[i].values[0]),
        )
        for i in range(K)
    ]


def prove(
    inputs: list[int],
    circ: Circuit,
    T: int,
    K: int,
    rng,
    input_shares: list[ShareVector] | None = None,
) -> list[ProverPackage]:
    """Produce the K prover packages for a circuit input.

    When the input vector is already shared (the usual flow: sharing happens
    before the circuit is revealed), pass those shares so the proof binds to
    them; otherwise a fresh sharing is drawn from rng.
    """
    if input_shares is None:
        input_shares, _ = ss_share(inputs, T, K, rng)
    _, _, h = compute_h(circ, inputs)
    return package_proof(input_shares, h, T, K, rng)


@dataclass(frozen=True)
class WireShares:
    """Per-server circuit evaluation: multiplication-gate input wire shares
    (in gate order) and the output wire share."""

    mul_inputs: tuple[tuple[int, int], ...]
    output_share: int


def server_eval(pkg: ProverPackage, circ: Circuit) -> WireShares:
    """Evaluate the circuit on shares.

    Input, constant, add, and sub gates are local (a public constant is its
    own share at every index); each multiplication gate t takes its output
    share from [h]_i(t). Records ([f(t)]_i, [g(t)]_i) per multiplication gate.
    """
    values = pkg.share.values
    if len(values) != circ.num_inputs:
        raise ValueError("share length does not match circuit arity")
    wires = [0] * len(circ.gates)
    mul_inputs = []
    t = 0
    for gid, g in enumerate(circ.gates):
        if g.kind == INPUT:
            wires[gid] = values[g.a]
        elif g.kind == CONST:
            wires[gid] = g.value
        elif g.kind == ADD:
            wires[gid] = field.add(wires[g.a], wires[g.b])
        elif g.kind == SUB:
            wires[gid] = field.sub(wires[g.a], wires[g.b])
        elif g.kind == MUL:
            t += 1
            mul_inputs.append((wires[g.a], wires[g.b]))
            wires[gid] = field.poly_eval(pkg.h_coeff_shares, t)
        else:
            raise ValueError(f"unknown gate kind {g.kind!r}")
    return WireShares(mul_inputs=tuple(mul_inputs), output_share=wires[circ.output])


@dataclass(frozen=True)
class CheckState:
    """Server-local state between the two rounds of the identity test."""

    index: int
    d_share: int
    e_share: int
    h_r_share: int
    a_share: int
    b_share: int
    c_share: int
    output_share: int


@dataclass(frozen=True)
class VerdictShares:
    """What a server submits: shares of the identity value and circuit output.

    decode_failed marks a robust-reconstruction failure during the d/e
    opening, which is attributable to an inconsistent sharing by the prover.
    """

    identity_share: int
    output_share: int
    decode_failed: bool = False


def server_round1(
    pkg: ProverPackage, circ: Circuit, r: int, wires: WireShares | None = None
) -> tuple[CheckState, int, int]:
    """First identity-test round: derive and broadcast [d]_i and [e]_i.

    d = fhat(r) - a and e = ghat(r) - b open safely; a and b act as
    one-time pads.
    """
    if wires is None:
        wires = server_eval(pkg, circ)
    M = len(wires.mul_inputs)
    if M == 0:
        raise ValueError("circuit has no multiplication gates; nothing to check")
    dom = field.eval_domain(M)
    f_r = dom.interpolate_at([u for u, _ in wires.mul_inputs], r)
    g_r = dom.interpolate_at([v for _, v in wires.mul_inputs], r)
    a, b, c = pkg.triple
    state = CheckState(
        index=pkg.index,
        d_share=field.sub(f_r, a),
        e_share=field.sub(g_r, b),
        h_r_share=field.poly_eval(pkg.h_coeff_shares, r),
        a_share=a,
        b_share=b,
        c_share=c,
        output_share=wires.output_share,
    )
    return state, state.d_share, state.e_share


def server_round2(
    state: CheckState, d_broadcast: list[int], e_broadcast: list[int], T: int
) -> VerdictShares:
    """Second round: open d and e robustly, then form the verdict shares.

    The broadcast lists hold every server's d/e share in index order 1..K;
    up to floor((K-T-1)/2) of them may be garbage. The Beaver identity
    gives the product share as d*e + d*[b] + e*[a] + [c].
    """
    try:
        d = robust_recon_scalar(d_broadcast, T)
        e = robust_recon_scalar(e_broadcast, T)
    except DecodeFailure:
        return VerdictShares(identity_share=0, output_share=0, decode_failed=True)
    prod_share = (
        field.mul(d, e)
        + field.mul(d, state.b_share)
        + field.mul(e, state.a_share)
        + state.c_share
    ) % Q
    return VerdictShares(
        identity_share=field.sub(state.h_r_share, prod_share),
        output_share=state.output_share,
    )
