import json
import random

import pytest

from gradmarket import commit, field
from gradmarket.commit import setup_key
from gradmarket.contract import (
    FINISHED,
    GRAD_VALIDATION,
    PAYMENT,
    PHASES,
    RECONSTRUCTION,
    REGISTER,
    SETUP,
    SHARE_COLLECTION,
    SHARE_READY,
    GasTable,
    TradeContract,
    TxRejected,
    baseline_gas_estimate,
    expected_word_count,
    merkle_root,
    rs_decode_field_ops,
)
from gradmarket.circuit import build_norm_circuit
from gradmarket.field import Q
from gradmarket.shamir import ShareVector, ss_share


def _fresh(deposit=100, N=4, K=5, T=1, m=3, validation=True):
    rng = random.Random(7)
    key = setup_key(m, rng)
    contract = TradeContract(
        deposit=deposit,
        whitelist=range(N),
        K=K,
        T=T,
        commit_key=key,
        rng=random.Random(11),
        validation=validation,
    )
    return contract, key, rng


def _honest_sharing(key, rng, m=3, T=1, K=5):
    secret = [field.rand_element(rng) for _ in range(m)]
    shares, masks = ss_share(secret, T, K, rng)
    return secret, shares, commit.commit(secret, masks, key)


def _advance_to_validation(contract, key, rng, N=4):
    contract.start(b"\x01" * 32, M0=8, N_max=N)
    sharings = {}
    for n in range(N):
        contract.register(n)
    for n in range(N):
        secret, shares, cm = _honest_sharing(key, rng, T=contract.T, K=contract.K)
        contract.store_commitment(n, cm)
        sharings[n] = (secret, shares)
    contract.mark_shares_ready()
    contract.begin_validation()
    return sharings


def test_lifecycle_and_phase_guards():
    contract, key, rng = _fresh()
    assert contract.phase == SETUP
    contract.start(b"\x02" * 32, M0=4, N_max=4)
    assert contract.phase == REGISTER
    with pytest.raises(TxRejected):
        contract.start(b"\x02" * 32, M0=4, N_max=4)  # second start rejected
    assert contract.phase == REGISTER


def test_gas_of_start_from_cost_table():
    contract, _, _ = _fresh()
    contract.start(b"\x03" * 32, M0=4, N_max=4)
    t = GasTable()
    assert contract.meter.per_method["start"] == t.tx_base + t.hash_word + 2 * t.storage_word_write


def test_rejected_tx_charges_base_and_preserves_state():
    contract, _, _ = _fresh()
    words = contract.on_chain_word_count()
    gas_before = contract.meter.total
    with pytest.raises(TxRejected):
        contract.register(0)  # wrong phase
    assert contract.meter.total == gas_before + GasTable().tx_base
    assert contract.on_chain_word_count() == words
    assert contract.phase == SETUP
    assert contract.tx_log[-1]["phase_before"] == contract.tx_log[-1]["phase_after"]


def test_register_full_set_advances_phase():
    contract, _, _ = _fresh(N=4)
    contract.start(b"\x04" * 32, M0=4, N_max=4)
    for n in range(3):
        contract.register(n)
        assert contract.phase == REGISTER
    contract.register(3)
    assert contract.phase == SHARE_COLLECTION


def test_register_rejections():
    contract, _, _ = _fresh(N=4)
    contract.start(b"\x05" * 32, M0=4, N_max=4)
    with pytest.raises(TxRejected):
        contract.register(99)  # not whitelisted
    contract.register(1)
    with pytest.raises(TxRejected):
        contract.register(1)  # duplicate


def test_register_timeout_proceeds_with_partial_set():
    contract, _, _ = _fresh(N=4)
    contract.start(b"\x06" * 32, M0=4, N_max=4)
    contract.register(0)
    contract.register(1)
    for _ in range(3):
        contract.advance_round()
    assert contract.phase == SHARE_COLLECTION
    assert contract.registered == [0, 1]


def test_commitment_from_unregistered_rejected():
    contract, key, rng = _fresh()
    contract.start(b"\x07" * 32, M0=4, N_max=2)
    contract.register(0)
    contract.register(1)
    _, _, cm = _honest_sharing(key, rng)
    with pytest.raises(TxRejected):
        contract.store_commitment(3, cm)


def test_complaint_upheld_excludes_owner():
    contract, key, rng = _fresh(N=2)
    contract.start(b"\x08" * 32, M0=4, N_max=2)
    contract.register(0)
    contract.register(1)
    for n in range(2):
        secret, shares, cm = _honest_sharing(key, rng)
        contract.store_commitment(n, cm)
    # owner 1 delivered a corrupted share to server 3
    bad = ShareVector(index=3, values=(1, 2, 3))
    contract.complain(3, 1)
    assert contract.resolve_complaint(1, bad) is False
    contract.mark_shares_ready()
    assert contract.validity == {0}


def test_false_complaint_dismissed_owner_retained():
    contract, key, rng = _fresh(N=1)
    contract.start(b"\x09" * 32, M0=4, N_max=1)
    contract.register(0)
    secret, shares, cm = _honest_sharing(key, rng)
    contract.store_commitment(0, cm)
    contract.complain(2, 0)
    assert contract.resolve_complaint(0, shares[1]) is True
    assert contract.false_complaints == [(2, 0)]
    contract.mark_shares_ready()
    assert contract.validity == {0}


def test_shares_ready_blocked_by_pending_complaint():
    contract, key, rng = _fresh(N=1)
    contract.start(b"\x0a" * 32, M0=4, N_max=1)
    contract.register(0)
    _, shares, cm = _honest_sharing(key, rng)
    contract.store_commitment(0, cm)
    contract.complain(1, 0)
    with pytest.raises(TxRejected):
        contract.mark_shares_ready()
    contract.resolve_complaint(0, shares[0])
    contract.mark_shares_ready()


def test_challenge_ordering_enforced():
    contract, key, rng = _fresh()
    _advance_to_validation(contract, key, rng)
    with pytest.raises(TxRejected):
        contract.sample_challenge()  # before reveal
    circ = build_norm_circuit(3, 4, accept_zero=True)
    contract.reveal_circuit(circ)
    r = contract.sample_challenge()
    assert 0 <= r < Q
    with pytest.raises(TxRejected):
        contract.sample_challenge()  # only once
    with pytest.raises(TxRejected):
        contract.reveal_circuit(circ)  # only once


def test_challenge_deterministic_per_seed():
    def challenge(seed):
        contract = TradeContract(
            deposit=1, whitelist=[0], K=4, T=1,
            commit_key=setup_key(3, random.Random(5)),
            rng=random.Random(seed),
        )
        contract.start(b"\x0b" * 32, M0=1, N_max=1)
        contract.register(0)
        _, _, cm = _honest_sharing(setup_key(3, random.Random(5)), random.Random(6), K=4)
        contract.store_commitment(0, cm)
        contract.mark_shares_ready()
        contract.begin_validation()
        contract.reveal_circuit(build_norm_circuit(3, 2, accept_zero=True))
        return contract.sample_challenge()

    assert challenge(1) == challenge(1)
    assert challenge(1) != challenge(2)


def _submit_shared_value(contract, n, identity_value, output_value, rng):
    """Shamir-share two scalars across K servers and submit all verdicts."""
    id_shares, _ = ss_share([identity_value], contract.T, contract.K, rng)
    out_shares, _ = ss_share([output_value], contract.T, contract.K, rng)
    for i in range(1, contract.K + 1):
        contract.submit_verdict(i, n, id_shares[i - 1].values[0], out_shares[i - 1].values[0])


def test_verdict_flow_accept_and_reject():
    contract, key, rng = _fresh()
    _advance_to_validation(contract, key, rng)
    contract.reveal_circuit(build_norm_circuit(3, 4, accept_zero=True))
    contract.sample_challenge()
    _submit_shared_value(contract, 0, 0, 0, rng)  # identity 0, output 0: valid
    _submit_shared_value(contract, 1, 0, 5, rng)  # output nonzero: rejected
    _submit_shared_value(contract, 2, 7, 0, rng)  # identity nonzero: rejected
    _submit_shared_value(contract, 3, 0, 0, rng)
    assert contract.validity == {0, 3}
    assert contract.verdicts[1]["valid"] is False
    assert contract.verdicts[2]["valid"] is False
    contract.complete_validation()
    assert contract.phase == PAYMENT


def test_duplicate_verdict_rejected():
    contract, key, rng = _fresh()
    _advance_to_validation(contract, key, rng)
    contract.reveal_circuit(build_norm_circuit(3, 4, accept_zero=True))
    contract.sample_challenge()
    contract.submit_verdict(1, 0, 1, 1)
    with pytest.raises(TxRejected):
        contract.submit_verdict(1, 0, 1, 1)


def test_verdict_buffer_freed_after_reconstruction():
    contract, key, rng = _fresh()
    _advance_to_validation(contract, key, rng)
    contract.reveal_circuit(build_norm_circuit(3, 4, accept_zero=True))
    contract.sample_challenge()
    _submit_shared_value(contract, 0, 0, 0, rng)
    assert "verdict_buffer" not in contract.slots
    assert contract.slots["verdicts"] == 1


def _complete_session(contract, key, rng, N=4, identity=0, output=0):
    sharings = _advance_to_validation(contract, key, rng, N=N)
    contract.reveal_circuit(build_norm_circuit(3, 4, accept_zero=True))
    contract.sample_challenge()
    for n in range(N):
        _submit_shared_value(contract, n, identity, output, rng)
    contract.complete_validation()
    contract.pay()
    contract.aggregate_commitment()
    contract.finish()
    return sharings


def test_payment_even_split():
    contract, key, rng = _fresh(deposit=100, N=4)
    _complete_session(contract, key, rng)
    assert all(contract.balances[n] == 25 for n in range(4))


def test_payment_floor_and_remainder():
    contract, key, rng = _fresh(deposit=100, N=3)
    _complete_session(contract, key, rng, N=3)
    assert all(contract.balances[n] == 33 for n in range(3))
    assert sum(contract.balances.values()) == 99


def test_payment_refund_on_empty_validity():
    contract, key, rng = _fresh(deposit=100, N=2)
    _advance_to_validation(contract, key, rng, N=2)
    contract.reveal_circuit(build_norm_circuit(3, 4, accept_zero=True))
    contract.sample_challenge()
    for n in range(2):
        _submit_shared_value(contract, n, 0, 9, rng)  # everyone invalid
    contract.complete_validation()
    contract.pay()
    assert contract.balances == {"mo": 100}
    assert contract.aggregate_commitment() is None
    contract.finish()
    assert contract.phase == FINISHED


def test_aggregate_commitment_matches_validity_product():
    contract, key, rng = _fresh(N=3)
    sharings = _advance_to_validation(contract, key, rng, N=3)
    contract.reveal_circuit(build_norm_circuit(3, 4, accept_zero=True))
    contract.sample_challenge()
    for n in range(3):
        _submit_shared_value(contract, n, 0, 0, rng)
    contract.complete_validation()
    contract.pay()
    agg = contract.aggregate_commitment()
    # the summed shares of the valid owners verify against the aggregate
    for i in range(contract.K):
        summed = [0, 0, 0]
        for n in range(3):
            for k in range(3):
                summed[k] = field.add(summed[k], sharings[n][1][i].values[k])
        assert commit.verify_share(ShareVector(i + 1, tuple(summed)), agg, key)


def test_word_count_matches_closed_form():
    contract, key, rng = _fresh(deposit=100, N=4, T=1)
    _complete_session(contract, key, rng)
    assert contract.on_chain_word_count() == expected_word_count(4, 1)


def test_word_count_closed_form_across_parameters():
    for N in range(2, 7):
        for T in range(1, 4):
            K = 2 * T + 3
            rng = random.Random(100 + N * 10 + T)
            key = setup_key(3, rng)
            contract = TradeContract(
                deposit=50, whitelist=range(N), K=K, T=T,
                commit_key=key, rng=random.Random(1),
            )
            _complete_session(contract, key, rng, N=N)
            assert contract.on_chain_word_count() == expected_word_count(N, T), (N, T)


def test_state_machine_safety_exhaustive():
    """Every (phase, transaction) pair outside the legal edges is rejected
    and leaves phase, storage, and validity unchanged."""
    legal = {
        "start": {SETUP},
        "register": {REGISTER},
        "advance_round": {REGISTER},
        "store_commitment": {SHARE_COLLECTION},
        "complain": {SHARE_COLLECTION},
        "resolve_complaint": {SHARE_COLLECTION},
        "mark_shares_ready": {SHARE_COLLECTION},
        "begin_validation": {SHARE_READY},
        "reveal_circuit": {GRAD_VALIDATION},
        "sample_challenge": {GRAD_VALIDATION},
        "submit_verdict": {GRAD_VALIDATION},
        "complete_validation": {GRAD_VALIDATION},
        "pay": {PAYMENT},
        "aggregate_commitment": {RECONSTRUCTION},
        "finish": {RECONSTRUCTION},
    }

    def drive_to(phase):
        contract, key, rng = _fresh(N=2)
        if phase == SETUP:
            return contract
        contract.start(b"\x0c" * 32, M0=4, N_max=2)
        if phase == REGISTER:
            return contract
        contract.register(0)
        contract.register(1)
        if phase == SHARE_COLLECTION:
            return contract
        for n in range(2):
            _, _, cm = _honest_sharing(key, rng)
            contract.store_commitment(n, cm)
        contract.mark_shares_ready()
        if phase == SHARE_READY:
            return contract
        contract.begin_validation()
        if phase == GRAD_VALIDATION:
            return contract
        contract.reveal_circuit(build_norm_circuit(3, 4, accept_zero=True))
        contract.sample_challenge()
        for n in range(2):
            _submit_shared_value(contract, n, 0, 0, rng)
        contract.complete_validation()
        if phase == PAYMENT:
            return contract
        contract.pay()
        if phase == RECONSTRUCTION:
            return contract
        contract.aggregate_commitment()
        contract.finish()
        return contract

    cm_rng = random.Random(55)
    key = setup_key(3, cm_rng)
    _, spare_shares, spare_cm = _honest_sharing(key, cm_rng)
    args = {
        "start": (b"\x0d" * 32, 4, 2),
        "register": (0,),
        "advance_round": (),
        "store_commitment": (0, spare_cm),
        "complain": (1, 0),
        "resolve_complaint": (0, spare_shares[0]),
        "mark_shares_ready": (),
        "begin_validation": (),
        "reveal_circuit": (build_norm_circuit(3, 4, accept_zero=True),),
        "sample_challenge": (),
        "submit_verdict": (1, 0, 1, 1),
        "complete_validation": (),
        "pay": (),
        "aggregate_commitment": (),
        "finish": (),
    }
    for phase in PHASES:
        for method, legal_phases in legal.items():
            if phase in legal_phases:
                continue
            contract = drive_to(phase)
            snapshot = (
                contract.phase,
                dict(contract.slots),
                set(contract.validity),
                sorted(contract.balances.items(), key=str),
            )
            with pytest.raises(TxRejected):
                getattr(contract, method)(*args[method])
            assert contract.phase == snapshot[0], (phase, method)
            assert contract.slots == snapshot[1], (phase, method)
            assert contract.validity == snapshot[2]
            assert sorted(contract.balances.items(), key=str) == snapshot[3]


def test_tx_log_schema():
    contract, key, rng = _fresh()
    _complete_session(contract, key, rng)
    keys = {"method", "caller", "gas", "phase_before", "phase_after", "stored_words_delta"}
    for line in contract.tx_log_jsonl().strip().split("\n"):
        record = json.loads(line)
        assert set(record) == keys
        assert record["phase_before"] in PHASES and record["phase_after"] in PHASES


def test_merkle_root_properties():
    data = bytes(range(256)) * 20  # 5120 bytes: 5 chunks, padded to 8 leaves
    root = merkle_root(data)
    assert len(root) == 32
    assert merkle_root(data) == root
    assert merkle_root(data[:-1]) != root
    assert len(merkle_root(b"")) == 32
    assert len(merkle_root(b"x")) == 32


def test_rs_decode_cost_model_scaling():
    assert rs_decode_field_ops(5) == 5 * 9
    assert rs_decode_field_ops(16) == 16 * 16


def test_baseline_estimate_scales_with_m():
    base_small = baseline_gas_estimate(100, 4, 300)
    base_big = baseline_gas_estimate(400, 4, 300)
    assert base_big["total"] > 3 * base_small["total"]


def test_gas_table_overrides():
    t = GasTable.from_dict({"field_op": 3})
    assert t.field_op == 3 and t.tx_base == 21000
    with pytest.raises(ValueError):
        GasTable.from_dict({"bogus": 1})
