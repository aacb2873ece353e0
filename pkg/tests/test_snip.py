import random

import pytest

from gradmarket import field, snip
from gradmarket.circuit import CircuitBuilder, build_norm_circuit, eval_plain
from gradmarket.field import Q
from gradmarket.shamir import ShareVector, robust_recon_scalar, ss_recon, ss_share


def _run_protocol(packages, circ, r, T, corrupt_servers=(), corrupt_rng=None):
    """Drive the two-round identity test; returns the per-server verdicts."""
    K = len(packages)
    states, d_bc, e_bc = [], [0] * K, [0] * K
    for i in range(1, K + 1):
        st, d, e = snip.server_round1(packages[i - 1], circ, r)
        if i in corrupt_servers:
            d, e = corrupt_rng.randrange(Q), corrupt_rng.randrange(Q)
        states.append(st)
        d_bc[i - 1], e_bc[i - 1] = d, e
    return [snip.server_round2(st, d_bc, e_bc, T) for st in states]


def _contract_view(verdicts, T):
    ident = robust_recon_scalar([v.identity_share for v in verdicts], T)
    out = robust_recon_scalar([v.output_share for v in verdicts], T)
    return ident, out


def test_prove_single_mul_constant_h():
    b = CircuitBuilder(2)
    b_out = b.mul(b.input(0), b.input(1))
    circ = b.build(b_out)
    rng = random.Random(1)
    f, g, h = snip.compute_h(circ, [3, 4])
    assert f == [3] and g == [4] and h == [12]
    packages = snip.prove([3, 4], circ, 1, 3, rng)
    # every h share evaluates to a share of the constant 12
    shares = [ShareVector(p.index, (field.poly_eval(p.h_coeff_shares, 77),)) for p in packages]
    assert ss_recon(shares[:2], 1) == [12]


def test_h_reconstructs_trace_products():
    rng = random.Random(2)
    circ = build_norm_circuit(3, 5, accept_zero=True)
    inputs = [2, 0, 1]
    _, trace = eval_plain(circ, inputs)
    M = circ.num_mul
    packages = snip.prove(inputs, circ, 2, 6, rng)
    assert all(len(p.h_coeff_shares) == 2 * M - 1 for p in packages)
    # reconstruct each coefficient of h from T+1 packages, then check h(t)
    h = []
    for j in range(2 * M - 1):
        coeff_shares = [ShareVector(p.index, (p.h_coeff_shares[j],)) for p in packages[:3]]
        h.append(ss_recon(coeff_shares, 2)[0])
    for t, (u, v, w) in enumerate(trace.entries, start=1):
        assert field.poly_eval(h, t) == field.mul(u, v) == w


def test_beaver_triple_reconstructs_consistently():
    rng = random.Random(3)
    circ = build_norm_circuit(2, 3, accept_zero=True)
    packages = snip.prove([1, 1], circ, 1, 4, rng)
    abc = []
    for pos in range(3):
        shares = [ShareVector(p.index, (p.triple[pos],)) for p in packages[:2]]
        abc.append(ss_recon(shares, 1)[0])
    a, b, c = abc
    assert field.mul(a, b) == c


def test_server_eval_reconstructs_wire_values():
    rng = random.Random(4)
    b = CircuitBuilder(2)
    out = b.mul(b.input(0), b.input(1))
    circ = b.build(out)
    packages = snip.prove([5, 7], circ, 1, 4, rng)
    wire_shares = [snip.server_eval(p, circ) for p in packages]
    # left input of gate 1 reconstructs to 5
    left = [ShareVector(p.index, (w.mul_inputs[0][0],)) for p, w in zip(packages, wire_shares)]
    right = [ShareVector(p.index, (w.mul_inputs[0][1],)) for p, w in zip(packages, wire_shares)]
    assert ss_recon(left[:2], 1) == [5]
    assert ss_recon(right[:2], 1) == [7]
    outs = [ShareVector(p.index, (w.output_share,)) for p, w in zip(packages, wire_shares)]
    assert ss_recon(outs[:2], 1) == [35]


def test_share_of_public_constant_is_constant():
    b = CircuitBuilder(1)
    c5 = b.const(5)
    out = b.mul(b.input(0), c5)
    circ = b.build(out)
    rng = random.Random(5)
    packages = snip.prove([9], circ, 1, 3, rng)
    for p in packages:
        w = snip.server_eval(p, circ)
        # the right input wire of the single mul gate is the constant itself
        assert w.mul_inputs[0][1] == 5


def test_all_add_circuit_has_no_wire_shares_and_rejects_proving():
    b = CircuitBuilder(2)
    out = b.add(b.input(0), b.input(1))
    circ = b.build(out)
    rng = random.Random(6)
    shares, _ = ss_share([1, 2], 1, 3, rng)
    pkg = snip.ProverPackage(share=shares[0], h_coeff_shares=(), triple=(0, 0, 0))
    assert snip.server_eval(pkg, circ).mul_inputs == ()
    with pytest.raises(ValueError):
        snip.compute_h(circ, [1, 2])


def test_honest_completeness():
    rng = random.Random(7)
    T, K = 1, 5
    circ = build_norm_circuit(3, 10, accept_zero=True)
    inputs = [1, 2, 2]  # sum sq 9 <= 10
    out_plain, _ = eval_plain(circ, inputs)
    assert out_plain == 0
    packages = snip.prove(inputs, circ, T, K, rng)
    r = field.rand_element(rng)
    verdicts = _run_protocol(packages, circ, r, T)
    ident, out = _contract_view(verdicts, T)
    assert ident == 0 and out == 0


def test_invalid_input_detected_through_output_wire():
    rng = random.Random(8)
    T, K = 1, 5
    circ = build_norm_circuit(2, 4, accept_zero=True)
    inputs = [3, 3]  # 18 > 4
    out_plain, _ = eval_plain(circ, inputs)
    packages = snip.prove(inputs, circ, T, K, rng)
    verdicts = _run_protocol(packages, circ, field.rand_element(rng), T)
    ident, out = _contract_view(verdicts, T)
    assert ident == 0  # the proof itself is honest
    assert out == out_plain != 0


def test_tampered_h_rejected():
    rng = random.Random(9)
    T, K = 1, 5
    circ = build_norm_circuit(2, 6, accept_zero=True)
    inputs = [1, 1]
    rejections = 0
    trials = 30
    for _ in range(trials):
        input_shares, _ = ss_share(inputs, T, K, rng)
        _, _, h = snip.compute_h(circ, inputs)
        h[rng.randrange(len(h))] = (h[rng.randrange(len(h))] + rng.randrange(1, Q)) % Q
        packages = snip.package_proof(input_shares, h, T, K, rng)
        verdicts = _run_protocol(packages, circ, field.rand_element(rng), T)
        ident, _ = _contract_view(verdicts, T)
        if ident != 0:
            rejections += 1
    assert rejections == trials


def test_corrupt_servers_within_budget_absorbed():
    rng = random.Random(10)
    T, K = 1, 5  # budget floor((5-1-1)/2) = 1
    circ = build_norm_circuit(2, 8, accept_zero=True)
    inputs = [2, 1]
    packages = snip.prove(inputs, circ, T, K, rng)
    r = field.rand_element(rng)
    honest = _run_protocol(packages, circ, r, T)
    corrupted = _run_protocol(packages, circ, r, T, corrupt_servers={3}, corrupt_rng=rng)
    # the d/e openings reconstruct identically, so honest servers' verdict
    # shares agree with the clean run
    for i in (0, 1, 3, 4):
        assert honest[i] == corrupted[i]
    ident, out = _contract_view(corrupted, T)
    assert ident == 0 and out == 0


def test_malformed_triple_only_hurts_the_prover():
    # a prover-supplied triple with c != a*b shifts the identity test by a
    # nonzero constant, so an honest input gets rejected; it never helps
    rng = random.Random(14)
    T, K = 1, 5
    circ = build_norm_circuit(2, 6, accept_zero=True)
    inputs = [1, 1]
    input_shares, _ = ss_share(inputs, T, K, rng)
    _, _, h = snip.compute_h(circ, inputs)
    packages = snip.package_proof(input_shares, h, T, K, rng)
    # corrupt c consistently across servers: share c + delta instead of c
    delta_shares, _ = ss_share([12345], T, K, rng)
    packages = [
        snip.ProverPackage(
            share=p.share,
            h_coeff_shares=p.h_coeff_shares,
            triple=(p.triple[0], p.triple[1],
                    field.add(p.triple[2], d.values[0])),
        )
        for p, d in zip(packages, delta_shares)
    ]
    verdicts = _run_protocol(packages, circ, field.rand_element(rng), T)
    ident, _ = _contract_view(verdicts, T)
    assert ident != 0


def test_decode_failure_reported_when_openings_unrecoverable():
    rng = random.Random(11)
    T, K = 1, 4  # budget floor((4-1-1)/2) = 1, two liars exceed it
    circ = build_norm_circuit(2, 4, accept_zero=True)
    packages = snip.prove([1, 1], circ, T, K, rng)
    states, d_bc, e_bc = [], [0] * K, [0] * K
    for i in range(1, K + 1):
        st, d, e = snip.server_round1(packages[i - 1], circ, field.rand_element(random.Random(50)))
        states.append(st)
        d_bc[i - 1], e_bc[i - 1] = d, e
    d_bc[0] = field.rand_element(rng)
    d_bc[2] = field.rand_element(rng)
    verdict = snip.server_round2(states[1], d_bc, e_bc, T)
    assert verdict.decode_failed


def test_on_wire_shares_have_shamir_degree_T():
    """Degree discipline: honest verdict shares interpolate to a degree <= T
    polynomial across servers (the Beaver trick avoids degree doubling)."""
    rng = random.Random(12)
    T, K = 2, 7
    circ = build_norm_circuit(2, 5, accept_zero=True)
    packages = snip.prove([1, 2], circ, T, K, rng)
    r = field.rand_element(rng)
    verdicts = _run_protocol(packages, circ, r, T)
    for values in ([v.identity_share for v in verdicts], [v.output_share for v in verdicts]):
        poly = field.poly_interpolate(list(zip(range(1, K + 1), values)))
        assert field.poly_deg(poly) <= T


def test_package_wire_format_roundtrip():
    rng = random.Random(13)
    circ = build_norm_circuit(2, 3, accept_zero=True)
    packages = snip.prove([1, 0], circ, 1, 3, rng)
    M = circ.num_mul
    for p in packages:
        data = p.to_bytes()
        expect_len = (8 + 2 * 16) + (2 * M - 1) * 16 + 3 * 16
        assert len(data) == expect_len
        assert snip.ProverPackage.from_bytes(data, M) == p
