"""Direct and server-assisted session protocols."""

import numpy as np
import pytest

from scansec import crypto, protocol, storage, transport
from scansec.circuits import multimatch as mm_circuit
from scansec.circuits.builder import eval_plain
from scansec.errors import AuthError, InvalidInput, ParamsMismatch
from scansec.gc_engine.garbling import garble
from scansec.model import Scanpath, SymbolSequence, extract_saccades
from scansec.reference import SubstitutionMatrix, scanmatch_raw

GRID3 = SubstitutionMatrix.from_grid(3)
SM = protocol.AlgoParams("scanmatch", matrix=GRID3)
SUBS = protocol.AlgoParams("subsmatch", alphabet=3, ngram=1)
MM = protocol.AlgoParams("multimatch")


def _symbols(rng, n, size=9):
    return rng.integers(0, size, size=n).astype(np.int64)


def _saccade_words(rng, n):
    while True:
        x = rng.uniform(0.05, 0.95, size=n + 1)
        y = rng.uniform(0.05, 0.95, size=n + 1)
        dur = rng.integers(80, 600, size=n + 1).astype(float)
        sp = Scanpath(x=x, y=y, dur_ms=dur)
        try:
            return mm_circuit.encode_saccades(extract_saccades(sp))
        except InvalidInput:
            continue


def _freqs(rng, d):
    w = rng.integers(0, 1000, size=d).astype(np.int64)
    total = int(w.sum()) or 1
    q = (w * (1 << 14)) // total
    q[0] += (1 << 14) - int(q.sum())
    return q


class TestAlgoParams:
    def test_validation(self):
        with pytest.raises(InvalidInput):
            protocol.AlgoParams("scanmatch")
        with pytest.raises(InvalidInput):
            protocol.AlgoParams("subsmatch", alphabet=1, ngram=2)
        with pytest.raises(InvalidInput):
            protocol.AlgoParams("dtw")

    def test_digest_tracks_parameters(self):
        other = protocol.AlgoParams("scanmatch",
                                    matrix=SubstitutionMatrix.from_grid(5))
        assert SM.digest() != other.digest()
        assert SM.digest() == protocol.AlgoParams(
            "scanmatch", matrix=SubstitutionMatrix.from_grid(3)).digest()


@pytest.fixture(scope="module")
def setup():
    rng = crypto.Prg(42)
    np_rng = np.random.default_rng(4)
    sk_b, pk_b = crypto.x25519_keypair(rng)
    stored = _symbols(np_rng, 5)
    query = _symbols(np_rng, 4)
    payload = protocol.items_to_payload(SM, stored)
    _, rec, (m_share, _) = storage.create_record(
        payload, "scanmatch", SM.digest(), [pk_b], rng=rng)
    circuit = protocol.build_session_circuit(SM, len(payload), len(query))
    inputs = {
        ("garbler", "mask_r"): protocol.bits_from_bytes(rec.mask),
        ("garbler", "ct_server"): protocol.bits_from_bytes(rec.ct),
        ("garbler", "header"): protocol.bits_from_bytes(rec.header.pack()),
        ("garbler", "tag"): protocol.bits_from_bytes(rec.tag),
        ("evaluator", "masked_key"): protocol.bits_from_bytes(m_share),
        ("evaluator", "ct_client"): protocol.bits_from_bytes(rec.ct),
        ("evaluator", "ct_digest"): protocol.bits_from_bytes(
            crypto.sha256(rec.ct)),
        ("evaluator", "query"): protocol.items_to_bits(SM, query),
    }
    return circuit, inputs, rec, stored, query


class TestSessionCircuit:
    def _run(self, circuit, inputs):
        out = eval_plain(circuit, inputs)
        return int(out["fail"][0]), protocol._int_from_bits(out["raw"])

    def test_honest_run_scores_the_decrypted_payload(self, setup):
        circuit, inputs, _, stored, query = setup
        fail, raw = self._run(circuit, inputs)
        expected = scanmatch_raw(SymbolSequence(stored, 3, 1),
                                 SymbolSequence(query, 3, 1), GRID3)
        assert fail == 0
        assert raw == expected

    @pytest.mark.parametrize("field,pos", [
        ("tag", 0), ("tag", 31), ("mask_r", 7), ("header", 9),
        ("ct_server", 2),
    ])
    def test_single_byte_tamper_means_bottom(self, setup, field, pos):
        circuit, inputs, rec, _, _ = setup
        source = {"tag": rec.tag, "mask_r": rec.mask,
                  "header": rec.header.pack(), "ct_server": rec.ct}[field]
        bad = bytearray(source)
        bad[pos] ^= 0x20
        tampered = dict(inputs)
        tampered[("garbler", field)] = protocol.bits_from_bytes(bytes(bad))
        if field == "ct_server":
            # served and stored copies corrupt together; digest follows
            tampered[("evaluator", "ct_client")] = protocol.bits_from_bytes(
                bytes(bad))
            tampered[("evaluator", "ct_digest")] = protocol.bits_from_bytes(
                crypto.sha256(bytes(bad)))
        fail, raw = self._run(circuit, tampered)
        assert fail == 1
        assert raw == 0

    def test_transit_mismatch_between_copies_means_bottom(self, setup):
        circuit, inputs, rec, _, _ = setup
        bad = bytearray(rec.ct)
        bad[1] ^= 0x01
        tampered = dict(inputs)
        tampered[("evaluator", "ct_client")] = protocol.bits_from_bytes(
            bytes(bad))
        tampered[("evaluator", "ct_digest")] = protocol.bits_from_bytes(
            crypto.sha256(bytes(bad)))
        fail, raw = self._run(circuit, tampered)
        assert fail == 1 and raw == 0

    def test_decode_map_covers_only_final_outputs(self, setup):
        circuit, _, rec, _, _ = setup
        gc, _, _, decode = garble(circuit, {
            ("garbler", "mask_r"): protocol.bits_from_bytes(rec.mask),
            ("garbler", "ct_server"): protocol.bits_from_bytes(rec.ct),
            ("garbler", "header"): protocol.bits_from_bytes(
                rec.header.pack()),
            ("garbler", "tag"): protocol.bits_from_bytes(rec.tag),
        }, b"seed-structural-check")
        assert set(decode) == {"raw", "fail"}
        assert set(decode) == set(circuit.output_map)

    def test_build_is_deterministic(self):
        a = protocol.build_session_circuit(SUBS, 6, 3)
        b = protocol.build_session_circuit(SUBS, 6, 3)
        assert a.structural_hash() == b.structural_hash()

    def test_rejects_malformed_payload_lengths(self):
        with pytest.raises(InvalidInput):
            protocol.build_session_circuit(MM, 24, 2)  # not 16 B/saccade
        with pytest.raises(InvalidInput):
            protocol.build_session_circuit(SUBS, 8, 3)  # d != 3
        with pytest.raises(InvalidInput):
            protocol.build_session_circuit(SM, 0, 3)


class TestCompare:
    def test_scanmatch_matches_reference(self):
        rng = np.random.default_rng(11)
        a, q = _symbols(rng, 7), _symbols(rng, 6)
        rg, re_ = protocol.compare_in_process(SM, a, q, seed=3)
        expected = scanmatch_raw(SymbolSequence(a, 3, 1),
                                 SymbolSequence(q, 3, 1), GRID3)
        assert rg.raw == re_.raw == {"raw": expected}
        assert rg.scores == re_.scores

    def test_subsmatch_identical_inputs_score_one(self):
        rng = np.random.default_rng(12)
        f = _freqs(rng, 3)
        rg, _ = protocol.compare_in_process(SUBS, f, f, seed=4)
        assert rg.scores["similarity"] == 1.0

    def test_subsmatch_disjoint_zero_is_not_bottom(self):
        fa = np.array([1 << 14, 0, 0], dtype=np.int64)
        fb = np.array([0, 1 << 14, 0], dtype=np.int64)
        rg, re_ = protocol.compare_in_process(SUBS, fa, fb, seed=5)
        assert rg.scores["similarity"] == 0.0
        assert re_.raw == rg.raw

    def test_multimatch_identical_inputs_score_one(self):
        words = _saccade_words(np.random.default_rng(13), 3)
        rg, re_ = protocol.compare_in_process(MM, words, words, seed=6)
        assert rg.scores["overall"] == 1.0
        assert re_.scores == rg.scores

    def test_params_mismatch_aborts_both_sides(self):
        rng = np.random.default_rng(14)
        a, q = _symbols(rng, 4), _symbols(rng, 4)
        other = protocol.AlgoParams("scanmatch",
                                    matrix=SubstitutionMatrix.from_grid(5))
        ch_g, ch_e = transport.pair()
        import threading
        caught = {}

        def gar():
            try:
                protocol.run_compare_garbler(ch_g, SM, a, seed=1)
            except Exception as exc:
                caught["garbler"] = exc

        t = threading.Thread(target=gar)
        t.start()
        q25 = rng.integers(0, 25, size=4).astype(np.int64)
        with pytest.raises(ParamsMismatch):
            protocol.run_compare_evaluator(ch_e, other, q25, seed=1)
        t.join()
        ch_g.close()
        ch_e.close()
        assert isinstance(caught["garbler"], ParamsMismatch)

    def test_transcript_shape_ignores_values(self):
        rng = np.random.default_rng(15)
        logs = []
        for _ in range(2):
            a, q = _symbols(rng, 6), _symbols(rng, 5)
            _, re_ = protocol.compare_in_process(SM, a, q, seed=8)
            logs.append(list(re_.metrics.frames.items()))
        assert logs[0] == logs[1]


@pytest.fixture(scope="module")
def record_setup(tmp_path_factory):
    rng = crypto.Prg(1001)
    np_rng = np.random.default_rng(16)
    sk_b, pk_b = crypto.x25519_keypair(rng)
    store = storage.RecordStore(tmp_path_factory.mktemp("records"))
    stored_items = _symbols(np_rng, 6)
    payload = protocol.items_to_payload(SM, stored_items)
    rid, rec, escrow = storage.create_record(
        payload, "scanmatch", SM.digest(), [pk_b], rng=rng)
    store.save(rid, rec)
    query = _symbols(np_rng, 5)
    return store, rid, rec, escrow, (sk_b, pk_b), stored_items, query


class TestEvaluate:
    def test_matches_direct_compare_bit_for_bit(self, record_setup):
        store, rid, _, _, (sk_b, pk_b), stored_items, query = record_setup
        outcome, report = protocol.evaluate_in_process(
            store, rid, sk_b, pk_b, SM, query, seed=21)
        assert outcome.ok and report.status == "ok"
        rg, _ = protocol.compare_in_process(SM, stored_items, query, seed=22)
        assert outcome.raw == rg.raw
        assert outcome.scores == rg.scores

    def test_unknown_record_and_stranger_rejected(self, record_setup):
        store, rid, _, _, (sk_b, pk_b), _, query = record_setup
        with pytest.raises(AuthError):
            protocol.evaluate_in_process(store, "00" * 8, sk_b, pk_b, SM,
                                         query, seed=23)
        rng = crypto.Prg(3030)
        sk_x, pk_x = crypto.x25519_keypair(rng)
        with pytest.raises(AuthError):
            protocol.evaluate_in_process(store, rid, sk_x, pk_x, SM, query,
                                         seed=24)

    def test_late_authorization_with_vault(self, record_setup, tmp_path):
        store, rid, rec, escrow, _, stored_items, query = record_setup
        vault = storage.OwnerVault(tmp_path / "v", "owner-pass")
        vault.add(rid, escrow)
        vault.save()
        rng = crypto.Prg(4040)
        sk_new, pk_new = crypto.x25519_keypair(rng)
        reopened = storage.OwnerVault(tmp_path / "v", "owner-pass")
        updated = storage.authorize(rec, reopened.get(rid), pk_new, rng=rng)
        store.save(rid, updated)
        outcome, report = protocol.evaluate_in_process(
            store, rid, sk_new, pk_new, SM, query, seed=25)
        assert outcome.ok and report.status == "ok"
        store.save(rid, rec)  # restore for other tests

    def test_mask_share_alone_does_not_determine_key(self, record_setup):
        _, _, rec, (m_share, _), (sk_b, _), _, _ = record_setup
        # everything the server stores, plus effort, still needs sk_B
        rng = crypto.Prg(5050)
        sk_wrong, _ = crypto.x25519_keypair(rng)
        cid = next(iter(rec.wrapped))
        with pytest.raises(AuthError):
            crypto.unwrap_masked_key(rec.wrapped[cid], sk_wrong, rec.pk_a)
        m = crypto.unwrap_masked_key(rec.wrapped[cid], sk_b, rec.pk_a)
        assert m == m_share


class TestEvaluateTamper:
    def _tampered_run(self, record_setup, tmp_path, mutate):
        store, rid, rec, _, (sk_b, pk_b), _, query = record_setup
        broken = storage.RecordStore(tmp_path)
        blob = bytearray(rec.pack())
        mutate(blob, rec)
        with open(broken.path(rid), "wb") as fh:
            fh.write(bytes(blob))
        return protocol.evaluate_in_process(broken, rid, sk_b, pk_b, SM,
                                            query, seed=31)

    def test_ciphertext_byte_flip_is_bottom(self, record_setup, tmp_path):
        outcome, report = self._tampered_run(
            record_setup, tmp_path,
            lambda blob, rec: blob.__setitem__(storage.HEADER_LEN + 1,
                                               blob[storage.HEADER_LEN + 1]
                                               ^ 0x80))
        assert outcome.bottom and report.status == "bottom"

    def test_mask_byte_flip_is_bottom(self, record_setup, tmp_path):
        def mutate(blob, rec):
            at = storage.HEADER_LEN + len(rec.ct) + storage.TAG_LEN + 3
            blob[at] ^= 0x01

        outcome, report = self._tampered_run(record_setup, tmp_path, mutate)
        assert outcome.bottom and report.status == "bottom"

    def test_wrapped_key_flip_is_auth_error(self, record_setup, tmp_path):
        def mutate(blob, rec):
            blob[-1] ^= 0x04  # inside the single E entry

        with pytest.raises(AuthError):
            self._tampered_run(record_setup, tmp_path, mutate)

    def test_header_digest_flip_is_bottom(self, record_setup, tmp_path):
        outcome, report = self._tampered_run(
            record_setup, tmp_path,
            lambda blob, rec: blob.__setitem__(30, blob[30] ^ 0x40))
        assert outcome.bottom
        assert report.status == "bottom"
