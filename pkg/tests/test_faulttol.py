import json
import math
from itertools import combinations

import numpy as np
import pytest

from obc_sim.errors import ConfigurationError, DumpError
from obc_sim.faulttol import (
    BootChoice,
    BootImageStore,
    CodeWord,
    ConfigMemory,
    DecodeResult,
    DecodeStatus,
    Disagreement,
    FaultEvent,
    FaultInjector,
    MemoryBank,
    ecc_decode,
    ecc_encode,
    inject_faults,
    scrub_config,
    scrub_memory,
    select_boot_image,
    tmr_compute,
    tmr_vote,
)
from obc_sim.faulttol.ecc import CODE_BITS, encode_array, syndrome_array

WORDS = [0, (1 << 64) - 1, 0xDEADBEEFCAFEF00D, 0x0123456789ABCDEF]


# ECC --------------------------------------------------------------------------------------------

def test_zero_word_has_zero_check_byte():
    assert ecc_encode(0) == CodeWord(0, 0)
    assert ecc_decode(CodeWord(0, 0)) == DecodeResult(0, DecodeStatus.CLEAN)


@pytest.mark.parametrize('word', WORDS)
def test_every_single_flip_is_corrected_and_located(word):
    cw = ecc_encode(word)
    for index in range(CODE_BITS):
        assert ecc_decode(cw.flip(index)) == DecodeResult(word, DecodeStatus.CORRECTED, index)


@pytest.mark.parametrize('word', WORDS[1:3])
def test_every_double_flip_is_detected(word):
    cw = ecc_encode(word)
    for i, j in combinations(range(CODE_BITS), 2):
        assert ecc_decode(cw.flip(i).flip(j)).status is DecodeStatus.UNCORRECTABLE


def test_flip_index_is_bounded():
    with pytest.raises(ValueError):
        CodeWord(0, 0).flip(72)
    with pytest.raises(ValueError):
        CodeWord(0, 0).flip(-1)


def test_vectorized_encoder_agrees_with_the_scalar_one():
    words = np.random.default_rng(7).integers(0, 2 ** 64, size=64, dtype=np.uint64)
    check = encode_array(words)

    assert [int(c) for c in check] == [ecc_encode(int(w)).check for w in words]
    syndrome, overall = syndrome_array(words, check)
    assert not syndrome.any() and not overall.any()


# Memory banks and scrubbing ---------------------------------------------------------------------

def test_bank_reads_back_unaligned_writes():
    bank = MemoryBank(4, 'scratch')
    bank.write(5, b'across a boundary')
    assert bank.read(5, 17) == b'across a boundary'
    assert bank.read(0, 5) == bytes(5)
    with pytest.raises(IndexError):
        bank.read(30, 4)


def test_read_corrects_without_rewriting():
    bank = MemoryBank(2, 'scratch')
    bank.write(0, b'payload!')
    bank.flip(0, 3)

    assert bank.read(0, 8) == b'payload!'
    assert ecc_decode(bank.codeword(0)).status is DecodeStatus.CORRECTED


def test_scrub_rewrites_corrected_words():
    bank = MemoryBank.random(32, seed=2)
    before = bank.data.copy()
    bank.flip(3, 10)
    bank.flip(17, 70)

    report = scrub_memory(bank, now=100)

    assert (report.corrected, report.uncorrectable, report.words_scanned) == (2, 0, 32)
    assert np.array_equal(bank.data, before)
    assert scrub_memory(bank, now=200).corrected == 0
    assert bank.corrected == 2


def test_uncorrectable_word_is_flagged_once():
    bank = MemoryBank(8, 'image-flash')
    bank.flip(5, 1)
    bank.flip(5, 2)

    assert scrub_memory(bank, now=1_000).uncorrectable == 1
    assert scrub_memory(bank, now=2_000).uncorrectable == 1
    assert bank.uncorrectable == 1
    assert bank.bad_words == {5: 1_000}

    bank.write_word(5, 42)
    assert bank.bad_words == {}


def test_bad_word_log(tmp_path):
    bank = MemoryBank(4, 'telemetry-flash')
    bank.flip(2, 0)
    bank.flip(2, 64)
    scrub_memory(bank, now=7)

    path = bank.write_bad_words(tmp_path / 'bad.jsonl')

    lines = path.read_text().splitlines()
    assert [json.loads(line) for line in lines] == [{'bank': 'telemetry-flash', 'word': 2, 'flagged_at': 7}]


def test_dump_round_trip(tmp_path):
    bank = MemoryBank.random(16, seed=9, label='boot-flash')
    bank.flip(4, 33)

    loaded = MemoryBank.load(bank.dump(tmp_path / 'bank.ecc'))

    assert loaded.label == 'boot-flash'
    assert np.array_equal(loaded.data, bank.data)
    assert np.array_equal(loaded.check, bank.check)


def test_damaged_dumps_are_rejected():
    blob = MemoryBank(4).to_bytes()

    with pytest.raises(DumpError, match='magic'):
        MemoryBank.from_bytes(b'XXXX' + blob[4:])
    with pytest.raises(DumpError, match='version'):
        MemoryBank.from_bytes(blob[:4] + b'\x07' + blob[5:])
    with pytest.raises(DumpError, match='expected'):
        MemoryBank.from_bytes(blob[:-1])
    with pytest.raises(DumpError):
        MemoryBank.from_bytes(blob.replace(b'scratch', b'scrotch'))


def test_bank_validation():
    with pytest.raises(ValueError):
        MemoryBank(0)
    with pytest.raises(ValueError):
        MemoryBank(4, 'attic')


# Configuration memory ---------------------------------------------------------------------------

def test_config_scrub_restores_golden_and_notifies():
    cm = ConfigMemory(1024, seed=3)
    resets = []
    cm.on_rewrite.append(lambda: resets.append(True))
    for bit in (0, 100, 1023):
        cm.flip_absolute(bit)

    report = scrub_config(cm, now=50)

    assert report.corrected == 3
    assert cm.divergence == 0
    assert cm.rewrites == 1
    assert resets == [True]


def test_clean_config_memory_is_not_rewritten():
    cm = ConfigMemory(64)
    cm.on_rewrite.append(pytest.fail)
    assert scrub_config(cm).corrected == 0
    assert cm.rewrites == 0


def test_golden_copy_is_read_only():
    cm = ConfigMemory(8)
    with pytest.raises(ValueError):
        cm.golden[0] ^= 1


# TMR --------------------------------------------------------------------------------------------

@pytest.mark.parametrize('outputs, value, disagreement, dissenter', [
    ((9, 9, 9), 9, Disagreement.NONE, None),
    ((5, 5, 7), 5, Disagreement.ONE_DISSENTER, 3),
    ((5, 7, 5), 5, Disagreement.ONE_DISSENTER, 2),
    ((7, 5, 5), 5, Disagreement.ONE_DISSENTER, 1),
    ((1, 2, 4), 0, Disagreement.SPLIT, None),
])
def test_tmr_vote(outputs, value, disagreement, dissenter):
    assert tmr_vote(*outputs) == (value, disagreement, dissenter)


def test_tmr_compute_masks_one_upset_replica():
    vote = tmr_compute(lambda: 0b1010, upset=lambda replica, v: v ^ 0b1 if replica == 1 else v)
    assert (vote.value, vote.dissenter) == (0b1010, 2)


# Boot images ------------------------------------------------------------------------------------

def test_valid_primary_is_booted():
    store = BootImageStore(size=256, seed=1)
    assert select_boot_image(store) is BootChoice.PRIMARY
    assert store.boots == 1


def test_corrupt_primary_falls_back():
    store = BootImageStore(b'flight software')
    store.flip_absolute(12)

    assert not store.primary_valid
    assert select_boot_image(store) is BootChoice.FALLBACK
    assert store.fallback_valid
    assert store.last_choice is BootChoice.FALLBACK


def test_upset_past_the_image_hits_the_checksum():
    store = BootImageStore(b'abcd')
    store.flip_absolute(4 * 8 + 5)
    assert store.primary == bytearray(b'abcd')
    assert not store.primary_valid
    assert store.bit_count == 4 * 8 + 32


# Fault injection --------------------------------------------------------------------------------

def test_unknown_fault_kind():
    with pytest.raises(ConfigurationError):
        FaultEvent(0, 'meteor')


def test_apply_validates_target_and_bit():
    injector = FaultInjector(targets={'scratch': MemoryBank(1)})
    with pytest.raises(ConfigurationError):
        injector.apply(FaultEvent(0, 'seu', 'attic', 0))
    with pytest.raises(ConfigurationError):
        injector.apply(FaultEvent(0, 'seu', 'scratch', 72))


def test_scheduled_upsets_fire_at_their_time():
    bank = MemoryBank(2)
    schedule = [FaultEvent(500, 'seu', 'scratch', 3), FaultEvent(200, 'hang', 'housekeeping')]
    injector = FaultInjector(targets={'scratch': bank}, schedule=schedule)

    assert inject_faults(injector, 400, 100) == []
    assert inject_faults(injector, 500, 100) == [schedule[0]]
    assert bank.codeword(0).data == 1 << 3
    assert inject_faults(injector, 600, 100) == []


def draw(seed, steps=20):
    injector = FaultInjector(2.0, {'b': MemoryBank(5_000), 'a': MemoryBank(5_000)}, seed=seed)
    return [ev for step in range(1, steps + 1) for ev in inject_faults(injector, step * 1000, 1000)]


def test_injection_is_reproducible():
    assert draw(11) == draw(11)
    assert draw(11) != draw(12)


def test_targets_are_visited_in_name_order():
    injector = FaultInjector(50.0, {'b': MemoryBank(5_000), 'a': MemoryBank(5_000)}, seed=1)
    names = [ev.target for ev in inject_faults(injector, 1000, 1000)]
    assert names == sorted(names)
    assert {'a', 'b'} == set(names)


def test_upset_count_follows_the_rate():
    bank = MemoryBank(100_000)
    injector = FaultInjector(1.0, {'scratch': bank}, seed=5)
    assert injector.expected_upsets('scratch', 1000) == pytest.approx(7.2)

    total = sum(len(inject_faults(injector, step * 1000, 1000)) for step in range(1, 101))

    assert abs(total - 720) < 3 * math.sqrt(720)
    assert injector.injected == total


def test_zero_rate_draws_nothing():
    injector = FaultInjector(0.0, {'scratch': MemoryBank(10_000)})
    assert inject_faults(injector, 1000, 1000) == []


def test_divergence_before_each_scrub_tracks_the_rate():
    cm = ConfigMemory(1_000_000, seed=8)
    injector = FaultInjector(2.0, {'config-memory': cm}, seed=13)
    period, step, periods = 5_000, 1_000, 500
    expected = 2.0 * (period / 1000) * cm.megabits

    now = 0
    found = []
    for _ in range(periods):
        for _ in range(period // step):
            now += step
            inject_faults(injector, now, step)
        found.append(cm.divergence)
        assert scrub_config(cm, now).corrected == found[-1]
        assert cm.divergence == 0

    assert abs(np.mean(found) - expected) < 3 * math.sqrt(expected / periods)
